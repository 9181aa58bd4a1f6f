#include "levyscore/malliavin.hpp"

#include <cmath>
#include <ostream>

namespace levyscore {

double delta_one(const JumpPath& jumps, const LevyMeasureSpec& levy, const CutoffSpec& cutoff) {
    double sum = 0.0;
    for (const auto& ev : jumps.events) {
        if (ev.size != 0.0 && std::abs(ev.size) <= levy.u0) sum += chi(ev.size, levy, cutoff);
    }
    return sum - jumps.T * compensator_chi(levy, cutoff, jumps.eps);
}

double d_delta_one(const JumpPath& jumps, const LevyMeasureSpec& levy, const CutoffSpec& cutoff) {
    double sum = 0.0;
    for (const auto& ev : jumps.events) {
        if (ev.size != 0.0 && std::abs(ev.size) <= levy.u0) {
            sum += chi_prime(ev.size, levy, cutoff) * cutoff.rho(ev.size);
        }
    }
    return sum;
}

std::optional<double> xi1(const VariationalBundle& b, double delta1, double y_min) {
    if (!(b.Y1 >= y_min)) return std::nullopt;
    const double y = b.Y1;
    return b.Z1 * delta1 / y + b.Z1 * b.Y2 / (y * y) - b.W1 / y;
}

namespace {

struct Expansion {
    double delta_ratio, d_delta_ratio, xi2;
};

Expansion expand_xi2(const VariationalBundle& b, double d1, double dd1) {
    const double A = b.Z1;
    const double B = b.Y1;
    const double B2 = B * B;
    const double ratio = A * A * d1 / B + A * A * b.Y2 / B2 - 2.0 * A * b.W1 / B;
    const double dratio = (2.0 * A / B) * (d1 * b.W1 - b.W2) + A * A * dd1 / B -
                          2.0 * b.W1 * b.W1 / B + (A / B) * (A / B) * (b.Y3 - d1 * b.Y2) +
                          4.0 * A * b.W1 * b.Y2 / B2 - 2.0 * (A * b.Y2) * (A * b.Y2) / (B2 * B);
    const double value = -dratio / B - b.V1 / B + (d1 / B + b.Y2 / B2) * (ratio + b.Z2);
    return {ratio, dratio, value};
}

// Truncated D-jets: value, D value, D^2 value.
struct Jet2 {
    double v, d, dd;
};
struct Jet1 {
    double v, d;
};

Jet2 operator*(const Jet2& f, const Jet2& g) {
    return {f.v * g.v, f.d * g.v + f.v * g.d, f.dd * g.v + 2.0 * f.d * g.d + f.v * g.dd};
}
Jet2 operator/(const Jet2& f, const Jet2& g) {
    const double h = f.v / g.v;
    const double hd = (f.d - h * g.d) / g.v;
    const double hdd = (f.dd - 2.0 * hd * g.d - h * g.dd) / g.v;
    return {h, hd, hdd};
}
Jet1 operator+(const Jet1& f, const Jet1& g) { return {f.v + g.v, f.d + g.d}; }
Jet1 operator/(const Jet1& f, const Jet1& g) {
    const double h = f.v / g.v;
    return {h, (f.d - h * g.d) / g.v};
}

// delta(G) as a jet one order lower: D delta(G) = D delta(1) G + delta(1) DG - D^2 G.
Jet1 divergence_jet(const Jet2& g, const Jet1& d1) {
    return {divergence(g.v, g.d, d1.v), d1.d * g.v + d1.v * g.d - g.dd};
}

}  // namespace

std::optional<double> xi2(const VariationalBundle& b, double delta1, double d_delta1, double y_min) {
    if (!(b.Y1 >= y_min)) return std::nullopt;
    return expand_xi2(b, delta1, d_delta1).xi2;
}

std::optional<double> xi2_nested(const VariationalBundle& b, double delta1, double d_delta1,
                                 double y_min) {
    if (!(b.Y1 >= y_min)) return std::nullopt;
    const Jet2 a{b.Z1, b.W1, b.W2};
    const Jet2 y{b.Y1, b.Y2, b.Y3};
    const Jet1 d1{delta1, d_delta1};
    const Jet1 inner = divergence_jet(a * a / y, d1);
    const Jet1 h = (inner + Jet1{b.Z2, b.V1}) / Jet1{b.Y1, b.Y2};
    return divergence(h.v, h.d, delta1);
}

MalliavinWeights compute_weights(const JumpPath& jumps, const VariationalBundle& b,
                                 const LevyMeasureSpec& levy, const CutoffSpec& cutoff, double y_min) {
    MalliavinWeights w;
    w.delta1 = delta_one(jumps, levy, cutoff);
    w.d_delta1 = d_delta_one(jumps, levy, cutoff);
    w.degenerate = !(b.Y1 >= y_min);
    if (w.degenerate) return w;
    w.xi1 = xi1(b, w.delta1, y_min);
    const auto e = expand_xi2(b, w.delta1, w.d_delta1);
    w.delta_ratio = e.delta_ratio;
    w.d_delta_ratio = e.d_delta_ratio;
    w.xi2 = e.xi2;
    if (!std::isfinite(*w.xi1) || !std::isfinite(*w.xi2)) {
        throw NumericalError("non-finite Malliavin weight on a non-degenerate path");
    }
    return w;
}

void write_weights_csv_header(std::ostream& os) {
    os << "path_id,delta1,d_delta1,xi1,xi2,degenerate\n";
}

void write_weights_csv(std::ostream& os, std::size_t path_id, const MalliavinWeights& w) {
    const auto old_precision = os.precision(17);
    os << path_id << ',' << w.delta1 << ',' << w.d_delta1 << ',';
    if (w.xi1) os << *w.xi1;
    os << ',';
    if (w.xi2) os << *w.xi2;
    os << ',' << (w.degenerate ? 1 : 0) << '\n';
    os.precision(old_precision);
}

}  // namespace levyscore

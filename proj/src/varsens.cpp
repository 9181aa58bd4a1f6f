#include "levyscore/varsens.hpp"

#include "levyscore/malliavin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace levyscore {

namespace {

void require_finite(const VariationalBundle& b, double t) {
    for (double v : {b.Et, b.Z1, b.Z2, b.Y1, b.Y2, b.Y3, b.W1, b.W2, b.V1, b.DEt, b.D2Et}) {
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "sensitivity diverged at t=" << t;
            throw NumericalError(os.str());
        }
    }
}

}  // namespace

VariationalBundle propagate_sensitivities(const SkeletonPath& skel, const JumpPath& jumps,
                                          const DriftSpec& drift, const CutoffSpec& cutoff) {
    if (skel.jump_index.size() != jumps.events.size()) {
        throw std::invalid_argument("skeleton and jump path are inconsistent");
    }
    VariationalBundle b;
    const std::size_t m = skel.steps();
    std::size_t k = 0;
    for (std::size_t i = 0; i <= m; ++i) {
        for (; k < jumps.events.size() && skel.jump_index[k] == i; ++k) {
            const double u = jumps.events[k].size;
            const double r = cutoff.rho(u);
            const double r1 = cutoff.rho_prime(u);
            const double r2 = cutoff.rho_second(u);
            b.Y1 += r;
            b.Y2 += r * r1;
            b.Y3 += (r2 * r + r1 * r1) * r;
        }
        if (i == m) break;

        const double dt = skel.t[i + 1] - skel.t[i];
        const auto d = drift.derivs(skel.theta, skel.x[i]);
        const double step = 1.0 + dt * d.a_x;
        if (!(step > 0.0)) throw NumericalError("Euler propagator 1 + h a_x is not positive; reduce h");

        const VariationalBundle o = b;
        b.Y1 = o.Y1 * step;
        b.Y2 = o.Y2 * step + dt * d.a_xx * o.Y1 * o.Y1;
        b.Y3 = o.Y3 * step + dt * (3.0 * d.a_xx * o.Y1 * o.Y2 + d.a_xxx * o.Y1 * o.Y1 * o.Y1);
        b.Z1 = o.Z1 * step + dt * d.a_t;
        b.Z2 = o.Z2 * step + dt * (d.a_xx * o.Z1 * o.Z1 + 2.0 * d.a_xt * o.Z1 + d.a_tt);
        b.W1 = o.W1 * step + dt * (d.a_xx * o.Y1 * o.Z1 + d.a_xt * o.Y1);
        b.W2 = o.W2 * step + dt * (d.a_xx * (o.Y2 * o.Z1 + 2.0 * o.Y1 * o.W1) +
                                   d.a_xxx * o.Y1 * o.Y1 * o.Z1 + d.a_xxt * o.Y1 * o.Y1 +
                                   d.a_xt * o.Y2);
        b.V1 = o.V1 * step + dt * (d.a_xx * (o.Y1 * o.Z2 + 2.0 * o.Z1 * o.W1) +
                                   d.a_xxx * o.Y1 * o.Z1 * o.Z1 + 2.0 * d.a_xxt * o.Y1 * o.Z1 +
                                   d.a_xtt * o.Y1 + 2.0 * d.a_xt * o.W1);
        b.Et = o.Et * step;
        b.DEt = o.DEt * step + o.Et * dt * d.a_xx * o.Y1;
        b.D2Et = o.D2Et * step + 2.0 * o.DEt * dt * d.a_xx * o.Y1 +
                 o.Et * dt * (d.a_xxx * o.Y1 * o.Y1 + d.a_xx * o.Y2);
        require_finite(b, skel.t[i + 1]);
    }
    b.XT = skel.terminal();
    return b;
}

double dx_series_coefficient(int i, int j, SeriesConvention conv) {
    if (j < 1 || j > 3 || i < 0 || i >= j) throw std::invalid_argument("series index out of range");
    if (conv == SeriesConvention::power_law) {
        double fact = 1.0;
        for (int q = 2; q <= i; ++q) fact *= q;
        return std::pow(static_cast<double>(i + 1), j - i + 1) / fact;
    }
    // D^{j} of sum_k P_k rho(u_k) by the product rule, with D u = rho(u):
    // binomial(j-1, i) for i < 2, and 1/2 for the rho (rho^2)'' term.
    static constexpr std::array<std::array<double, 3>, 3> table = {{
        {1.0, 0.0, 0.0},
        {1.0, 1.0, 0.0},
        {1.0, 2.0, 0.5},
    }};
    return table[j - 1][i];
}

double closed_form_DjX(const SkeletonPath& skel, const JumpPath& jumps, const DriftSpec& drift,
                       const CutoffSpec& cutoff, int j, SeriesConvention conv) {
    if (j < 1 || j > 3) throw std::invalid_argument("closed_form_DjX supports j = 1..3");
    const std::size_t m = skel.steps();
    const std::size_t kk = jumps.events.size();

    std::vector<DriftDerivs> d(m);
    std::vector<double> dt(m), f(m);
    std::vector<double> ppre(m + 1, 1.0);
    for (std::size_t l = 0; l < m; ++l) {
        d[l] = drift.derivs(skel.theta, skel.x[l]);
        dt[l] = skel.t[l + 1] - skel.t[l];
        f[l] = 1.0 + dt[l] * d[l].a_x;
        ppre[l + 1] = ppre[l] * f[l];
    }

    std::vector<double> r(kk), rr1(kk), r3(kk);
    for (std::size_t k = 0; k < kk; ++k) {
        const double u = jumps.events[k].size;
        const double r0 = cutoff.rho(u);
        const double r1 = cutoff.rho_prime(u);
        const double r2 = cutoff.rho_second(u);
        r[k] = r0;
        rr1[k] = r0 * r1;                          // rho (rho)'
        r3[k] = r0 * 2.0 * (r1 * r1 + r0 * r2);    // rho (rho^2)''
    }
    auto prop = [&](std::size_t from, std::size_t to) { return ppre[to] / ppre[from]; };

    // D X at every grid index.
    std::vector<double> y1(m + 1, 0.0);
    for (std::size_t i = 0; i <= m; ++i) {
        for (std::size_t k = 0; k < kk && skel.jump_index[k] <= i; ++k) {
            y1[i] += prop(skel.jump_index[k], i) * r[k];
        }
    }
    if (j == 1) return y1[m];

    // D log P_{m_k -> i} = Cpre[i] - Cpre[m_k].
    std::vector<double> c(m), cpre(m + 1, 0.0);
    for (std::size_t l = 0; l < m; ++l) {
        c[l] = dt[l] * d[l].a_xx * y1[l] / f[l];
        cpre[l + 1] = cpre[l] + c[l];
    }
    const double a0 = dx_series_coefficient(0, j, conv);
    const double a1 = dx_series_coefficient(1, j, conv);
    if (j == 2) {
        double out = 0.0;
        for (std::size_t k = 0; k < kk; ++k) {
            const std::size_t mk = skel.jump_index[k];
            const double p = prop(mk, m);
            const double s = cpre[m] - cpre[mk];
            out += a0 * p * s * r[k] + a1 * p * rr1[k];
        }
        return out;
    }

    // j == 3 needs D^2 X along the path for D of the log-propagator.
    std::vector<double> y2(m + 1, 0.0);
    const double b0 = dx_series_coefficient(0, 2, SeriesConvention::chain_rule);
    const double b1 = dx_series_coefficient(1, 2, SeriesConvention::chain_rule);
    for (std::size_t i = 0; i <= m; ++i) {
        for (std::size_t k = 0; k < kk && skel.jump_index[k] <= i; ++k) {
            const std::size_t mk = skel.jump_index[k];
            y2[i] += prop(mk, i) * (b0 * (cpre[i] - cpre[mk]) * r[k] + b1 * rr1[k]);
        }
    }
    std::vector<double> dpre(m + 1, 0.0);
    for (std::size_t l = 0; l < m; ++l) {
        const double dc = dt[l] * (d[l].a_xxx * y1[l] * y1[l] + d[l].a_xx * y2[l]) / f[l] - c[l] * c[l];
        dpre[l + 1] = dpre[l] + dc;
    }
    const double a2 = dx_series_coefficient(2, 3, conv);
    double out = 0.0;
    for (std::size_t k = 0; k < kk; ++k) {
        const std::size_t mk = skel.jump_index[k];
        const double p = prop(mk, m);
        const double s = cpre[m] - cpre[mk];
        const double ds = dpre[m] - dpre[mk];
        out += a0 * p * (s * s + ds) * r[k] + a1 * p * s * rr1[k] + a2 * p * r3[k];
    }
    return out;
}

namespace {

struct PathValues {
    double x, z1, z2, e, d1;
    double d1_scale;  // size of the terms that cancel inside chi
};

JumpPath perturbed(const JumpPath& jumps, double c, const CutoffSpec& cutoff) {
    JumpPath p = jumps;
    for (auto& ev : p.events) ev.size = flow_Q(c, ev.size, cutoff);
    return p;
}

PathValues evaluate(const PathContext& ctx, const JumpPath& jumps) {
    const auto skel = integrate_path(jumps, ctx.model.drift, ctx.theta, ctx.x0, ctx.h);
    const auto b = propagate_sensitivities(skel, jumps, ctx.model.drift, ctx.model.cutoff);
    double scale = 0.0;
    for (const auto& ev : jumps.events) {
        if (std::abs(ev.size) <= ctx.model.levy.u0) scale += std::abs(ctx.model.cutoff.rho_prime(ev.size));
    }
    return {b.XT, b.Z1, b.Z2, b.Et, delta_one(jumps, ctx.model.levy, ctx.model.cutoff), scale};
}

double select(const PathValues& v, GateauxTarget t) {
    switch (t) {
        case GateauxTarget::x_T: return v.x;
        case GateauxTarget::dtheta_x: return v.z1;
        case GateauxTarget::d2theta_x: return v.z2;
        case GateauxTarget::e_T: return v.e;
        case GateauxTarget::delta_one: return v.d1;
    }
    return 0.0;
}

// Values at c * {-2, -1, -1/2, 0, 1/2, 1, 2}.
struct Stencil {
    std::array<PathValues, 7> at;
    double c;

    const PathValues& get(int twice_multiple) const {
        switch (twice_multiple) {
            case -4: return at[0];
            case -2: return at[1];
            case -1: return at[2];
            case 0: return at[3];
            case 1: return at[4];
            case 2: return at[5];
            case 4: return at[6];
            default: throw std::logic_error("stencil point missing");
        }
    }
};

Stencil build_stencil(const PathContext& ctx, double c) {
    Stencil s{};
    s.c = c;
    const std::array<double, 7> mult = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
    for (std::size_t i = 0; i < mult.size(); ++i) {
        s.at[i] = evaluate(ctx, perturbed(ctx.jumps, mult[i] * c, ctx.model.cutoff));
    }
    return s;
}

double derivative(const Stencil& s, int order, GateauxTarget t) {
    // h = c uses points (in units of c/2) {..,-2,0,2,..}; h = c/2 uses {-1,0,1}.
    auto F = [&](int half_units) { return select(s.get(half_units), t); };
    auto estimate = [&](double h, int unit) {
        switch (order) {
            case 1: return (F(unit) - F(-unit)) / (2.0 * h);
            case 2: return (F(unit) - 2.0 * F(0) + F(-unit)) / (h * h);
            case 3: return (F(2 * unit) - 2.0 * F(unit) + 2.0 * F(-unit) - F(-2 * unit)) / (2.0 * h * h * h);
            default: throw std::invalid_argument("Gateaux order must be 1..3");
        }
    };
    // Third differences also read +-2h, i.e. units 4 and 2.
    const double coarse = estimate(s.c, 2);
    const double fine = estimate(0.5 * s.c, 1);
    return (4.0 * fine - coarse) / 3.0;
}

// Sum of |weights| of the extrapolated quotient times the per-evaluation
// rounding level, taken as eps * max|F| * sqrt(grid steps).
double rounding_bound(const Stencil& s, int order, GateauxTarget t, std::size_t steps) {
    static constexpr double weight_sum[4] = {0.0, 3.0, 68.0 / 3.0, 33.0};
    double m = 0.0;
    for (const auto& v : s.at) {
        m = std::max(m, std::abs(select(v, t)));
        if (t == GateauxTarget::delta_one) m = std::max(m, v.d1_scale);
    }
    const double noise = std::numeric_limits<double>::epsilon() * m * std::sqrt(static_cast<double>(steps + 1));
    return weight_sum[order] * noise / std::pow(s.c, order);
}

}  // namespace

double third_order_step(const PathContext& ctx, double c3) {
    const auto& cut = ctx.model.cutoff;
    auto crosses = [&](double c) {
        for (const auto& ev : ctx.jumps.events) {
            const double side = std::abs(ev.size) - cut.u1;
            for (double m : {-2.0, 2.0}) {
                const double moved = std::abs(flow_Q(m * c, ev.size, cut)) - cut.u1;
                if ((side < 0.0) != (moved < 0.0)) return true;
            }
        }
        return false;
    };
    double c = c3;
    while (c > c3 / 16.0 && crosses(c)) c *= 0.5;
    return c;
}

double gateaux_oracle(const PathContext& ctx, int order, GateauxTarget target, double c) {
    if (order < 1 || order > 3) throw std::invalid_argument("Gateaux order must be 1..3");
    if (!(c > 0.0)) c = order == 3 ? third_order_step(ctx) : kGateauxStep;
    return derivative(build_stencil(ctx, c), order, target);
}

GateauxBundle gateaux_bundle(const PathContext& ctx, double c, double c3) {
    const auto s = build_stencil(ctx, c);
    c3 = third_order_step(ctx, c3);
    const auto s3 = build_stencil(ctx, c3);
    const std::size_t steps = integrate_path(ctx.jumps, ctx.model.drift, ctx.theta, ctx.x0, ctx.h).steps();
    GateauxBundle g;
    g.step = c;
    g.step3 = c3;
    auto fill = [&](GateauxEntries& e, auto&& op) {
        e.Y1 = op(s, 1, GateauxTarget::x_T);
        e.Y2 = op(s, 2, GateauxTarget::x_T);
        e.Y3 = op(s3, 3, GateauxTarget::x_T);
        e.W1 = op(s, 1, GateauxTarget::dtheta_x);
        e.W2 = op(s, 2, GateauxTarget::dtheta_x);
        e.V1 = op(s, 1, GateauxTarget::d2theta_x);
        e.DEt = op(s, 1, GateauxTarget::e_T);
        e.D2Et = op(s, 2, GateauxTarget::e_T);
        e.Ddelta1 = op(s, 1, GateauxTarget::delta_one);
    };
    fill(g, [](const Stencil& st, int o, GateauxTarget t) { return derivative(st, o, t); });
    fill(g.rounding, [&](const Stencil& st, int o, GateauxTarget t) { return rounding_bound(st, o, t, steps); });
    return g;
}

double theta_difference(const PathContext& ctx, int order, double step) {
    auto X = [&](double th) {
        return integrate_path(ctx.jumps, ctx.model.drift, th, ctx.x0, ctx.h).terminal();
    };
    auto est = [&](double hs) {
        if (order == 1) return (X(ctx.theta + hs) - X(ctx.theta - hs)) / (2.0 * hs);
        if (order == 2) return (X(ctx.theta + hs) - 2.0 * X(ctx.theta) + X(ctx.theta - hs)) / (hs * hs);
        throw std::invalid_argument("theta_difference order must be 1 or 2");
    };
    return (4.0 * est(0.5 * step) - est(step)) / 3.0;
}

double x0_difference(const PathContext& ctx, double step) {
    auto X = [&](double x0) {
        return integrate_path(ctx.jumps, ctx.model.drift, ctx.theta, x0, ctx.h).terminal();
    };
    auto est = [&](double hs) { return (X(ctx.x0 + hs) - X(ctx.x0 - hs)) / (2.0 * hs); };
    return (4.0 * est(0.5 * step) - est(step)) / 3.0;
}

void write_bundle_csv_header(std::ostream& os) { os << "path_id,Et,Z1,Z2,Y1,Y2,Y3,W1,W2,V1\n"; }

void write_bundle_csv(std::ostream& os, std::size_t path_id, const VariationalBundle& b) {
    const auto old_precision = os.precision(17);
    os << path_id << ',' << b.Et << ',' << b.Z1 << ',' << b.Z2 << ',' << b.Y1 << ',' << b.Y2 << ','
       << b.Y3 << ',' << b.W1 << ',' << b.W2 << ',' << b.V1 << '\n';
    os.precision(old_precision);
}

}  // namespace levyscore

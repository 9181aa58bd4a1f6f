#include "levyscore/jumpsim.hpp"

#include "levyscore/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace levyscore {

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
    auto splitmix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    return splitmix(splitmix(master) ^ (index * 0xD6E8FEB86659FD93ULL + 0x632BE59BD9B4E019ULL));
}

JumpSampler::JumpSampler(const LevyMeasureSpec& levy, double eps, int nodes_per_sign)
    : eps_(eps), atoms_(levy.tail) {
    if (!(eps > 0.0)) throw std::invalid_argument("jump truncation eps must be positive");
    if (nodes_per_sign < 2) throw std::invalid_argument("tabulation needs at least two nodes");

    if (eps < levy.u0) {
        nodes_.resize(nodes_per_sign);
        const double lo = std::log(eps);
        const double hi = std::log(levy.u0);
        for (int j = 0; j < nodes_per_sign; ++j) {
            nodes_[j] = std::exp(lo + (hi - lo) * j / (nodes_per_sign - 1));
        }
        nodes_.front() = eps;
        nodes_.back() = levy.u0;
        pos_cum_.assign(nodes_per_sign, 0.0);
        neg_cum_.assign(nodes_per_sign, 0.0);
        auto pos = [&levy](double u) { return levy.sigma(u); };
        auto neg = [&levy](double u) { return levy.sigma(-u); };
        for (int j = 1; j < nodes_per_sign; ++j) {
            pos_cum_[j] = pos_cum_[j - 1] + integrate_positive(pos, nodes_[j - 1], nodes_[j]);
            neg_cum_[j] = neg_cum_[j - 1] + integrate_positive(neg, nodes_[j - 1], nodes_[j]);
        }
        pos_mass_ = pos_cum_.back();
        neg_mass_ = neg_cum_.back();
    }
    for (const auto& a : atoms_) atom_mass_ += a.mass;

    if (!std::isfinite(intensity()) || intensity() < 0.0) {
        throw NumericalError("jump intensity lambda(eps) is not finite");
    }
    for (std::size_t j = 1; j < pos_cum_.size(); ++j) {
        if (!(pos_cum_[j] >= pos_cum_[j - 1]) || !(neg_cum_[j] >= neg_cum_[j - 1])) {
            throw NumericalError("Levy measure tabulation is not monotone");
        }
    }

    // Compensation of jumps with eps <= |u| <= 1.
    double first_moment = 0.0;
    const double top = std::min(levy.u0, 1.0);
    if (eps < top) {
        first_moment += integrate_positive([&levy](double u) { return u * levy.sigma(u); }, eps, top);
        first_moment -= integrate_positive([&levy](double u) { return u * levy.sigma(-u); }, eps, top);
    }
    for (const auto& a : atoms_) {
        if (std::abs(a.u) <= 1.0 && std::abs(a.u) >= eps) first_moment += a.u * a.mass;
    }
    comp_drift_ = -first_moment;
}

double JumpSampler::invert(const std::vector<double>& cum, double target) const {
    auto it = std::upper_bound(cum.begin(), cum.end(), target);
    std::size_t j = static_cast<std::size_t>(std::distance(cum.begin(), it));
    if (j == 0) j = 1;
    if (j >= cum.size()) j = cum.size() - 1;
    const double width = cum[j] - cum[j - 1];
    const double frac = width > 0.0 ? (target - cum[j - 1]) / width : 0.0;
    return nodes_[j - 1] + std::clamp(frac, 0.0, 1.0) * (nodes_[j] - nodes_[j - 1]);
}

double JumpSampler::draw_size(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double pick = unif(rng) * intensity();
    const double v = unif(rng);
    if (pick < pos_mass_) return invert(pos_cum_, v * pos_mass_);
    pick -= pos_mass_;
    if (pick < neg_mass_) return -invert(neg_cum_, v * neg_mass_);
    pick -= neg_mass_;
    for (const auto& a : atoms_) {
        if (pick < a.mass) return a.u;
        pick -= a.mass;
    }
    return atoms_.empty() ? (pos_mass_ > 0.0 ? nodes_.back() : -nodes_.back()) : atoms_.back().u;
}

JumpPath JumpSampler::sample(double T, std::uint64_t seed) const {
    if (!(T > 0.0)) throw std::invalid_argument("horizon T must be positive");
    std::mt19937_64 rng(seed);
    JumpPath path;
    path.T = T;
    path.eps = eps_;
    path.comp_drift = comp_drift_;
    path.seed = seed;
    const double mean = intensity() * T;
    long long count = 0;
    if (mean > 0.0) {
        std::poisson_distribution<long long> pois(mean);
        count = pois(rng);
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    path.events.reserve(static_cast<std::size_t>(count));
    for (long long k = 0; k < count; ++k) {
        // (0, T]: flip the [0,1) draw.
        const double time = T * (1.0 - unif(rng));
        path.events.push_back({time, draw_size(rng)});
    }
    std::sort(path.events.begin(), path.events.end(),
              [](const JumpEvent& a, const JumpEvent& b) { return a.time < b.time; });
    return path;
}

JumpPath sample_jumps(const LevyMeasureSpec& levy, double T, double eps, std::uint64_t seed) {
    return JumpSampler(levy, eps).sample(T, seed);
}

SkeletonPath integrate_path(const JumpPath& jumps, const DriftSpec& drift, double theta, double x0,
                            double h) {
    if (!(h > 0.0)) throw std::invalid_argument("step h must be positive");
    SkeletonPath sk;
    sk.theta = theta;
    sk.x0 = x0;
    sk.comp_drift = jumps.comp_drift;
    sk.t.reserve(static_cast<std::size_t>(jumps.T / h) + jumps.events.size() + 2);
    sk.t.push_back(0.0);

    auto fill_to = [&](double target) {
        const double start = sk.t.back();
        const double len = target - start;
        if (len <= 0.0) return;
        const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / h - 1e-9)));
        for (std::size_t i = 1; i < n; ++i) sk.t.push_back(start + len * static_cast<double>(i) / n);
        sk.t.push_back(target);
    };

    sk.jump_index.reserve(jumps.events.size());
    for (const auto& ev : jumps.events) {
        fill_to(ev.time);
        sk.jump_index.push_back(sk.t.size() - 1);
    }
    fill_to(jumps.T);

    const std::size_t n = sk.t.size();
    std::vector<double> jump_sum(n, 0.0);
    for (std::size_t k = 0; k < jumps.events.size(); ++k) jump_sum[sk.jump_index[k]] += jumps.events[k].size;

    sk.x.resize(n);
    sk.x_left.resize(n);
    sk.x_left[0] = x0;
    sk.x[0] = x0 + jump_sum[0];
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double dt = sk.t[i + 1] - sk.t[i];
        const double xi = sk.x[i];
        const double next = xi + dt * (drift.derivs(theta, xi).a + jumps.comp_drift);
        if (!std::isfinite(next)) {
            std::ostringstream os;
            os << "state diverged at t=" << sk.t[i + 1] << " (seed " << jumps.seed << ")";
            throw NumericalError(os.str());
        }
        sk.x_left[i + 1] = next;
        sk.x[i + 1] = next + jump_sum[i + 1];
    }
    return sk;
}

double compensator_chi(const LevyMeasureSpec& levy, const CutoffSpec& cutoff, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("compensator_chi requires eps > 0");
    if (eps >= levy.u0) return 0.0;
    // chi sigma = -(sigma rho)'. On [eps, u0] this integrates to
    // (sigma rho)(eps); on [-u0, -eps] to -(sigma rho)(-eps).
    return levy.sigma(eps) * cutoff.rho(eps) - levy.sigma(-eps) * cutoff.rho(-eps);
}

double compensator_chi_quadrature(const LevyMeasureSpec& levy, const CutoffSpec& cutoff, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("compensator_chi requires eps > 0");
    if (eps >= levy.u0) return 0.0;
    auto f = [&](double u) { return chi(u, levy, cutoff) * levy.sigma(u); };
    auto g = [&](double u) { return chi(-u, levy, cutoff) * levy.sigma(-u); };
    // Split at u1 where rho changes form.
    double total = 0.0;
    const double mid = std::clamp(cutoff.u1, eps, levy.u0);
    total += integrate(f, eps, mid) + integrate(f, mid, levy.u0);
    total += integrate(g, eps, mid) + integrate(g, mid, levy.u0);
    return total;
}

void write_path_csv_header(std::ostream& os) { os << "path_id,t,x,is_jump,u\n"; }

void write_path_csv(std::ostream& os, std::size_t path_id, const SkeletonPath& skel,
                    const JumpPath& jumps) {
    std::vector<double> u(skel.t.size(), 0.0);
    std::vector<char> is_jump(skel.t.size(), 0);
    for (std::size_t k = 0; k < jumps.events.size(); ++k) {
        u[skel.jump_index[k]] += jumps.events[k].size;
        is_jump[skel.jump_index[k]] = 1;
    }
    const auto old_precision = os.precision(17);
    for (std::size_t i = 0; i < skel.t.size(); ++i) {
        os << path_id << ',' << skel.t[i] << ',' << skel.x[i] << ',' << int(is_jump[i]) << ','
           << u[i] << '\n';
    }
    os.precision(old_precision);
}

}  // namespace levyscore

#include "levyscore/likefit.hpp"

#include <cmath>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace levyscore {

void ObservationSet::validate() const {
    if (t.size() != x.size()) throw std::invalid_argument("observation times and values differ in length");
    if (t.size() < 2) throw std::invalid_argument("at least two observations are needed");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]) || !std::isfinite(x[i])) {
            throw std::invalid_argument("observation " + std::to_string(i) + " is not finite");
        }
        if (i > 0 && !(t[i] > t[i - 1])) {
            throw std::invalid_argument("observation times are not strictly increasing at row " +
                                        std::to_string(i));
        }
    }
}

ObservationSet read_observations_csv(std::istream& is) {
    ObservationSet obs;
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("observation file is empty");
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::invalid_argument("observation row " + std::to_string(row) + " has no comma");
        }
        try {
            std::size_t used = 0;
            const double t = std::stod(line.substr(0, comma), &used);
            const double x = std::stod(line.substr(comma + 1));
            obs.t.push_back(t);
            obs.x.push_back(x);
        } catch (const std::logic_error&) {
            throw std::invalid_argument("observation row " + std::to_string(row) + " is not numeric");
        }
    }
    obs.validate();
    return obs;
}

void write_observations_csv(std::ostream& os, const ObservationSet& obs) {
    const auto old_precision = os.precision(17);
    os << "t,x\n";
    for (std::size_t i = 0; i < obs.t.size(); ++i) os << obs.t[i] << ',' << obs.x[i] << '\n';
    os.precision(old_precision);
}

ObservationSet simulate_observations(const Simulator& sim, double theta, double x0, std::size_t n, double dt,
                                     double h, std::uint64_t seed) {
    if (!(dt > 0.0)) throw std::invalid_argument("observation spacing must be positive");
    ObservationSet obs;
    obs.t.reserve(n + 1);
    obs.x.reserve(n + 1);
    obs.t.push_back(0.0);
    obs.x.push_back(x0);
    double x = x0;
    for (std::size_t k = 1; k <= n; ++k) {
        const JumpPath jp = sim.sampler().sample(dt, mix_seed(seed, k));
        x = integrate_path(jp, sim.model().drift, theta, x, h).terminal();
        obs.t.push_back(static_cast<double>(k) * dt);
        obs.x.push_back(x);
    }
    return obs;
}

LoglikDerivatives loglik_derivatives(const Simulator& sim, const ObservationSet& obs, double theta,
                                     const LikelihoodConfig& cfg) {
    obs.validate();
    const std::size_t n = obs.transitions();
    LoglikDerivatives out;
    out.terms.resize(n);

    EnsembleConfig base;
    base.n_paths = cfg.n_paths;
    base.eps = cfg.eps;
    base.h = cfg.h;
    base.theta = theta;
    base.threads = 1;
    validate_config(base);

    parallel_for(n, cfg.threads, [&](std::size_t k) {
        EnsembleConfig c = base;
        c.T = obs.t[k + 1] - obs.t[k];
        c.x0 = obs.x[k];
        c.master_seed = mix_seed(cfg.master_seed, k + 1);
        const Ensemble ens = sim.ensemble(c, theta);
        KernelOptions opts;
        opts.bandwidth = cfg.bandwidth;
        opts.non_degenerate_only = true;
        TransitionTerm term;
        if (ens.degenerate_count() < ens.size()) {
            term.bandwidth = kernel_bandwidth(ens, opts);
            const auto b = bridge_estimate(ens, obs.x[k + 1], term.bandwidth);
            term.defined = b.defined;
            term.g = b.g;
            term.g_se = b.g_se;
            term.second = b.second;
            term.second_se = b.second_se;
            term.n_eff = b.n_eff;
        }
        out.terms[k] = term;
    });

    std::vector<double> g, g_var, s, s_var;
    for (const auto& term : out.terms) {
        if (!term.defined) {
            ++out.dropped;
            continue;
        }
        g.push_back(term.g);
        g_var.push_back(term.g_se * term.g_se);
        s.push_back(term.second);
        s_var.push_back(term.second_se * term.second_se);
    }
    out.used = g.size();
    out.ell1 = McEstimate{pairwise_sum(g), std::sqrt(pairwise_sum(g_var)), out.used, out.dropped};
    out.ell2 = McEstimate{pairwise_sum(s), std::sqrt(pairwise_sum(s_var)), out.used, out.dropped};
    out.reliable = n > 0 && static_cast<double>(out.dropped) <= cfg.max_drop_fraction * static_cast<double>(n);
    return out;
}

FitResult fit(const Simulator& sim, const ObservationSet& obs, double theta0, const LikelihoodConfig& cfg,
              const FitOptions& opts) {
    const Interval domain = sim.model().drift.theta_domain;
    if (!domain.contains(theta0)) throw std::invalid_argument("theta0 lies outside the parameter domain");
    if (!(opts.tol > 0.0) || opts.max_iter < 0 || !(opts.damping > 0.0) || !(opts.gradient_step > 0.0)) {
        throw std::invalid_argument("invalid fit options");
    }

    FitResult res;
    auto evaluate = [&](double theta) {
        const auto d = loglik_derivatives(sim, obs, theta, cfg);
        res.score_trace.push_back({theta, d.ell1.value, d.ell1.std_error, d.ell2.value, d.ell2.std_error, d.dropped});
        res.reliable = res.reliable && d.reliable;
        return d;
    };

    double theta = theta0;
    auto d = evaluate(theta);
    if (d.ell1.value == 0.0 && d.ell2.value == 0.0) {
        throw UnidentifiableError("observed information is identically zero; the drift does not depend on theta");
    }

    while (!(std::abs(d.ell1.value) <= opts.tol) && res.iterations < opts.max_iter) {
        double step;
        if (d.ell2.value < 0.0) {
            step = -opts.damping * d.ell1.value / d.ell2.value;
        } else {
            step = std::copysign(opts.damping * opts.gradient_step, d.ell1.value);
        }
        double next = domain.clamp(theta + step);
        auto dn = evaluate(next);
        for (int halvings = 0; !(std::abs(dn.ell1.value) < std::abs(d.ell1.value)) && halvings < 20; ++halvings) {
            step *= 0.5;
            next = domain.clamp(theta + step);
            dn = evaluate(next);
        }
        if (!(std::abs(dn.ell1.value) < std::abs(d.ell1.value))) {
            res.message = "step halving failed to reduce |score|";
            break;
        }
        theta = next;
        d = std::move(dn);
        ++res.iterations;
    }

    res.theta_hat = theta;
    res.observed_information = -d.ell2.value;
    res.converged = std::abs(d.ell1.value) <= opts.tol && res.observed_information > 0.0;
    if (res.observed_information > 0.0) {
        const double half = 1.96 / std::sqrt(res.observed_information);
        res.ci_low = theta - half;
        res.ci_high = theta + half;
    } else {
        res.ci_low = -std::numeric_limits<double>::infinity();
        res.ci_high = std::numeric_limits<double>::infinity();
    }
    if (res.message.empty()) {
        if (res.converged) {
            res.message = "converged";
        } else if (!(res.observed_information > 0.0)) {
            res.message = "observed information is not positive at the final iterate";
        } else {
            res.message = "iteration limit reached";
        }
    }
    return res;
}

}  // namespace levyscore

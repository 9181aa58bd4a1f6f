#include "levyscore/mcestim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace levyscore {

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 16) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

McEstimate mean_estimate(std::span<const double> v, std::size_t n_excluded) {
    McEstimate e;
    e.n_used = v.size();
    e.n_excluded = n_excluded;
    if (v.empty()) return e;
    const double n = static_cast<double>(v.size());
    e.value = pairwise_sum(v) / n;
    if (v.size() < 2) return e;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - e.value) * (v[i] - e.value);
    e.std_error = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
    return e;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    unsigned workers = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        constexpr std::size_t chunk = 64;
        for (;;) {
            const std::size_t begin = next.fetch_add(chunk);
            if (begin >= n) return;
            const std::size_t end = std::min(n, begin + chunk);
            try {
                for (std::size_t i = begin; i < end; ++i) fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

TestFunctionValue eval_test_function(TestFunction fn, double x) {
    switch (fn) {
        case TestFunction::one: return {1.0, 0.0, 0.0};
        case TestFunction::id: return {x, 1.0, 0.0};
        case TestFunction::sin: return {std::sin(x), std::cos(x), -std::sin(x)};
        case TestFunction::square: return {x * x, 2.0 * x, 2.0};
        case TestFunction::bounded_rational: {
            // x / (1 + x^2)
            const double d = 1.0 + x * x;
            return {x / d, (1.0 - x * x) / (d * d), 2.0 * x * (x * x - 3.0) / (d * d * d)};
        }
    }
    throw std::invalid_argument("unknown test function");
}

std::optional<TestFunction> parse_test_function(std::string_view name) {
    if (name == "one") return TestFunction::one;
    if (name == "id") return TestFunction::id;
    if (name == "sin") return TestFunction::sin;
    if (name == "square") return TestFunction::square;
    if (name == "bounded_rational" || name == "bounded-rational") return TestFunction::bounded_rational;
    return std::nullopt;
}

const char* to_string(TestFunction fn) {
    switch (fn) {
        case TestFunction::one: return "one";
        case TestFunction::id: return "id";
        case TestFunction::sin: return "sin";
        case TestFunction::square: return "square";
        case TestFunction::bounded_rational: return "bounded_rational";
    }
    return "?";
}

void validate_config(const EnsembleConfig& cfg) {
    if (cfg.n_paths < 2) throw std::invalid_argument("n_paths must be at least 2");
    if (!(cfg.fd_step_theta > 0.0) || !std::isfinite(cfg.fd_step_theta)) {
        throw std::invalid_argument("fd_step_theta must be positive");
    }
    if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) throw std::invalid_argument("T must be positive");
    if (!(cfg.h > 0.0) || !std::isfinite(cfg.h)) throw std::invalid_argument("h must be positive");
    if (!(cfg.eps > 0.0) || !std::isfinite(cfg.eps)) throw std::invalid_argument("eps must be positive");
    if (!std::isfinite(cfg.x0) || !std::isfinite(cfg.theta)) {
        throw std::invalid_argument("x0 and theta must be finite");
    }
}

std::size_t Ensemble::degenerate_count() const {
    return static_cast<std::size_t>(
        std::count_if(paths.begin(), paths.end(), [](const PathRecord& p) { return p.weights.degenerate; }));
}

std::vector<double> Ensemble::terminals() const {
    std::vector<double> out(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) out[i] = paths[i].bundle.XT;
    return out;
}

Simulator::Simulator(Model model, double eps) : model_(std::move(model)), sampler_(model_.levy, eps) {}

void Simulator::check(const EnsembleConfig& cfg) const {
    validate_config(cfg);
    if (cfg.eps != sampler_.eps()) throw std::invalid_argument("ensemble eps differs from the sampler's");
}

JumpPath Simulator::jumps(const EnsembleConfig& cfg, std::size_t path_id) const {
    return sampler_.sample(cfg.T, mix_seed(cfg.master_seed, path_id));
}

PathRecord Simulator::simulate_path(const EnsembleConfig& cfg, std::size_t path_id, double theta) const {
    const JumpPath jp = jumps(cfg, path_id);
    const SkeletonPath skel = integrate_path(jp, model_.drift, theta, cfg.x0, cfg.h);
    PathRecord rec;
    rec.bundle = propagate_sensitivities(skel, jp, model_.drift, model_.cutoff);
    rec.weights = compute_weights(jp, rec.bundle, model_.levy, model_.cutoff);
    return rec;
}

Ensemble Simulator::ensemble(const EnsembleConfig& cfg, double theta) const {
    check(cfg);
    Ensemble ens;
    ens.theta = theta;
    ens.paths.resize(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.threads,
                 [&](std::size_t i) { ens.paths[i] = simulate_path(cfg, i, theta); });
    return ens;
}

std::vector<double> Simulator::terminals(const EnsembleConfig& cfg, double theta) const {
    check(cfg);
    std::vector<double> out(cfg.n_paths);
    parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t i) {
        out[i] = integrate_path(jumps(cfg, i), model_.drift, theta, cfg.x0, cfg.h).terminal();
    });
    return out;
}

namespace {

std::optional<double> weight_of(const PathRecord& p, WeightKind w) {
    switch (w) {
        case WeightKind::none: return 1.0;
        case WeightKind::xi1: return p.weights.xi1;
        case WeightKind::xi2: return p.weights.xi2;
    }
    return std::nullopt;
}

double paired_z(double diff, double se) {
    if (se > 0.0) return diff / se;
    return diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
}

}  // namespace

McEstimate mc_expectation(const Ensemble& ens, TestFunction fn, WeightKind weight) {
    std::vector<double> v;
    v.reserve(ens.size());
    for (const auto& p : ens.paths) {
        const auto w = weight_of(p, weight);
        if (!w) continue;
        v.push_back(eval_test_function(fn, p.bundle.XT).f * *w);
    }
    if (v.empty()) throw NumericalError("all paths are degenerate");
    return mean_estimate(v, ens.size() - v.size());
}

McEstimate mc_expectation(const Simulator& sim, TestFunction fn, const EnsembleConfig& cfg,
                          WeightKind weight) {
    return mc_expectation(sim.ensemble(cfg), fn, weight);
}

IdentityData prepare_identity_data(const Simulator& sim, const EnsembleConfig& cfg) {
    IdentityData d;
    d.cfg = cfg;
    const double s = cfg.fd_step_theta;
    d.center = sim.ensemble(cfg, cfg.theta);
    d.plus = sim.terminals(cfg, cfg.theta + s);
    d.minus = sim.terminals(cfg, cfg.theta - s);
    if (cfg.richardson) {
        d.plus_half = sim.terminals(cfg, cfg.theta + 0.5 * s);
        d.minus_half = sim.terminals(cfg, cfg.theta - 0.5 * s);
    }
    return d;
}

IdentityReport check_derivative_identity(const IdentityData& data, int order, TestFunction fn) {
    if (order != 1 && order != 2) throw std::invalid_argument("identity order must be 1 or 2");
    const auto& paths = data.center.paths;
    const std::size_t n = paths.size();
    if (data.plus.size() != n || data.minus.size() != n) {
        throw std::invalid_argument("identity data ensembles differ in size");
    }
    const bool rich = data.cfg.richardson && data.plus_half.size() == n && data.minus_half.size() == n;
    const double s = data.cfg.fd_step_theta;

    auto f = [&](double x) { return eval_test_function(fn, x).f; };
    auto difference = [&](double xp, double x0, double xm, double step) {
        if (order == 1) return (f(xp) - f(xm)) / (2.0 * step);
        return (f(xp) - 2.0 * f(x0) + f(xm)) / (step * step);
    };

    std::vector<double> left, right, gap, pathwise, pgap, left_all;
    left_all.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = paths[i];
        const double x = p.bundle.XT;
        double l = difference(data.plus[i], x, data.minus[i], s);
        if (rich) l = (4.0 * difference(data.plus_half[i], x, data.minus_half[i], 0.5 * s) - l) / 3.0;
        left_all.push_back(l);
        const auto w = order == 1 ? p.weights.xi1 : p.weights.xi2;
        if (!w) continue;
        const auto tf = eval_test_function(fn, x);
        const double r = tf.f * *w;
        const double pw = order == 1 ? tf.f1 * p.bundle.Z1
                                     : tf.f2 * p.bundle.Z1 * p.bundle.Z1 + tf.f1 * p.bundle.Z2;
        left.push_back(l);
        right.push_back(r);
        gap.push_back(l - r);
        pathwise.push_back(pw);
        pgap.push_back(pw - r);
    }
    if (left.empty()) throw NumericalError("all paths are degenerate");

    IdentityReport rep;
    rep.order = order;
    rep.fn = fn;
    const auto L = mean_estimate(left);
    const auto R = mean_estimate(right);
    const auto G = mean_estimate(gap);
    const auto P = mean_estimate(pathwise);
    const auto PG = mean_estimate(pgap);
    rep.left = L.value;
    rep.left_se = L.std_error;
    rep.right = R.value;
    rep.right_se = R.std_error;
    rep.diff = G.value;
    rep.diff_se = G.std_error;
    rep.z = paired_z(G.value, G.std_error);
    rep.pathwise = P.value;
    rep.pathwise_se = P.std_error;
    rep.pathwise_z = paired_z(PG.value, PG.std_error);
    rep.left_all_paths = mean_estimate(left_all).value;
    rep.n_used = left.size();
    rep.n_excluded = n - left.size();
    rep.exclusion_fraction = static_cast<double>(rep.n_excluded) / static_cast<double>(n);
    rep.valid = rep.exclusion_fraction <= 0.2;
    return rep;
}

IdentityReport check_derivative_identity(const Simulator& sim, int order, TestFunction fn,
                                         const EnsembleConfig& cfg) {
    return check_derivative_identity(prepare_identity_data(sim, cfg), order, fn);
}

DualityReport check_duality(const Ensemble& ens, TestFunction fn, DualityFunctional g) {
    const std::size_t n = ens.size();
    if (n < 2) throw std::invalid_argument("duality check needs at least two paths");
    std::vector<double> lhs(n), rhs(n), gap(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = ens.paths[i].bundle;
        const double G = g == DualityFunctional::one ? 1.0 : b.XT;
        const double DG = g == DualityFunctional::one ? 0.0 : b.Y1;
        const auto tf = eval_test_function(fn, b.XT);
        lhs[i] = divergence(G, DG, ens.paths[i].weights.delta1) * tf.f;
        rhs[i] = G * tf.f1 * b.Y1;
        gap[i] = lhs[i] - rhs[i];
    }
    DualityReport rep;
    rep.fn = fn;
    rep.g = g;
    rep.lhs = mean_estimate(lhs);
    rep.rhs = mean_estimate(rhs);
    const auto d = mean_estimate(gap);
    rep.diff_se = d.std_error;
    rep.z = paired_z(d.value, d.std_error);
    return rep;
}

// ---------------------------------------------------------------------------

double silverman_bandwidth(std::span<const double> samples) {
    if (samples.size() < 2) return 1.0;
    const auto m = mean_estimate(samples);
    const double n = static_cast<double>(samples.size());
    const double sd = m.std_error * std::sqrt(n);
    if (!(sd > 0.0) || !std::isfinite(sd)) return 1.0;
    return 1.06 * sd * std::pow(n, -0.2);
}

namespace {

constexpr double kMassFloor = 5.0;

double gauss(double z) { return std::exp(-0.5 * z * z); }

void require_bandwidth(double bw) {
    if (!(bw > 0.0) || !std::isfinite(bw)) throw std::invalid_argument("bandwidth must be positive");
}

// Kernel-weighted sums of up to two response columns at one point.
struct LocalSums {
    double S = 0.0, S2 = 0.0;
    double m1 = 0.0, m2 = 0.0;
    double v11 = 0.0, v22 = 0.0, v12 = 0.0;
};

LocalSums local_sums(std::span<const double> x, std::span<const double> r1, std::span<const double> r2,
                     double y, double bw) {
    const std::size_t n = x.size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = gauss((x[i] - y) / bw);
    LocalSums s;
    std::vector<double> t(n);
    s.S = pairwise_sum(w);
    for (std::size_t i = 0; i < n; ++i) t[i] = w[i] * w[i];
    s.S2 = pairwise_sum(t);
    if (!(s.S > 0.0)) return s;
    for (std::size_t i = 0; i < n; ++i) t[i] = w[i] * r1[i];
    s.m1 = pairwise_sum(t) / s.S;
    for (std::size_t i = 0; i < n; ++i) t[i] = w[i] * w[i] * (r1[i] - s.m1) * (r1[i] - s.m1);
    s.v11 = pairwise_sum(t) / (s.S * s.S);
    if (r2.empty()) return s;
    for (std::size_t i = 0; i < n; ++i) t[i] = w[i] * r2[i];
    s.m2 = pairwise_sum(t) / s.S;
    for (std::size_t i = 0; i < n; ++i) t[i] = w[i] * w[i] * (r2[i] - s.m2) * (r2[i] - s.m2);
    s.v22 = pairwise_sum(t) / (s.S * s.S);
    for (std::size_t i = 0; i < n; ++i) t[i] = w[i] * w[i] * (r1[i] - s.m1) * (r2[i] - s.m2);
    s.v12 = pairwise_sum(t) / (s.S * s.S);
    return s;
}

struct Columns {
    std::vector<double> x, xi1, xi2;
    std::size_t excluded = 0;
};

Columns non_degenerate_columns(const Ensemble& ens) {
    Columns c;
    for (const auto& p : ens.paths) {
        if (p.weights.degenerate || !p.weights.xi1 || !p.weights.xi2) {
            ++c.excluded;
            continue;
        }
        c.x.push_back(p.bundle.XT);
        c.xi1.push_back(*p.weights.xi1);
        c.xi2.push_back(*p.weights.xi2);
    }
    return c;
}

std::vector<double> density_samples(const Ensemble& ens, bool non_degenerate_only) {
    std::vector<double> x;
    x.reserve(ens.size());
    for (const auto& p : ens.paths) {
        if (non_degenerate_only && p.weights.degenerate) continue;
        x.push_back(p.bundle.XT);
    }
    return x;
}

BridgeEstimate bridge_from_columns(const Columns& c, double y, double bw) {
    BridgeEstimate b;
    const auto s = local_sums(c.x, c.xi1, c.xi2, y, bw);
    if (!(s.S >= kMassFloor)) return b;
    b.defined = true;
    b.g = s.m1;
    b.g_se = std::sqrt(s.v11);
    b.G = s.m2;
    b.G_se = std::sqrt(s.v22);
    b.second = s.m2 - s.m1 * s.m1;
    const double var = s.v22 + 4.0 * s.m1 * s.m1 * s.v11 - 4.0 * s.m1 * s.v12;
    b.second_se = std::sqrt(std::max(var, 0.0));
    b.n_eff = s.S * s.S / s.S2;
    return b;
}

}  // namespace

std::vector<GridEstimate> kernel_density(std::span<const double> samples, std::span<const double> y_grid,
                                         double bandwidth) {
    require_bandwidth(bandwidth);
    const std::size_t n = samples.size();
    const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
    std::vector<GridEstimate> out;
    out.reserve(y_grid.size());
    std::vector<double> k(n);
    for (double y : y_grid) {
        for (std::size_t i = 0; i < n; ++i) k[i] = norm * gauss((samples[i] - y) / bandwidth);
        GridEstimate g;
        g.y = y;
        if (n > 0) {
            g.estimate = mean_estimate(k);
            const double S = pairwise_sum(k);
            std::vector<double> k2(n);
            for (std::size_t i = 0; i < n; ++i) k2[i] = k[i] * k[i];
            const double S2 = pairwise_sum(k2);
            g.n_eff = S2 > 0.0 ? S * S / S2 : 0.0;
        }
        out.push_back(g);
    }
    return out;
}

std::vector<GridEstimate> nadaraya_watson(std::span<const double> samples, std::span<const double> values,
                                          std::span<const double> y_grid, double bandwidth) {
    require_bandwidth(bandwidth);
    if (samples.size() != values.size()) throw std::invalid_argument("samples and values differ in size");
    std::vector<GridEstimate> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        GridEstimate g;
        g.y = y;
        const auto s = local_sums(samples, values, {}, y, bandwidth);
        if (s.S >= kMassFloor) {
            McEstimate e;
            e.value = s.m1;
            e.std_error = std::sqrt(s.v11);
            e.n_used = samples.size();
            g.estimate = e;
            g.n_eff = s.S * s.S / s.S2;
        }
        out.push_back(g);
    }
    return out;
}

double kernel_bandwidth(const Ensemble& ens, const KernelOptions& opts) {
    if (opts.bandwidth) {
        require_bandwidth(*opts.bandwidth);
        return *opts.bandwidth;
    }
    return silverman_bandwidth(density_samples(ens, opts.non_degenerate_only));
}

std::vector<GridEstimate> kernel_density(const Ensemble& ens, std::span<const double> y_grid,
                                         const KernelOptions& opts) {
    const auto x = density_samples(ens, opts.non_degenerate_only);
    auto out = kernel_density(x, y_grid, kernel_bandwidth(ens, opts));
    for (auto& g : out) {
        if (g.estimate) g.estimate->n_excluded = ens.size() - x.size();
    }
    return out;
}

std::vector<GridEstimate> kernel_g(const Ensemble& ens, std::span<const double> y_grid, int order,
                                   const KernelOptions& opts) {
    if (order != 1 && order != 2) throw std::invalid_argument("kernel_g order must be 1 or 2");
    const auto c = non_degenerate_columns(ens);
    KernelOptions o = opts;
    o.non_degenerate_only = true;
    const double bw = kernel_bandwidth(ens, o);
    auto out = nadaraya_watson(c.x, order == 1 ? c.xi1 : c.xi2, y_grid, bw);
    for (auto& g : out) {
        if (g.estimate) g.estimate->n_excluded = c.excluded;
    }
    return out;
}

BridgeEstimate bridge_estimate(const Ensemble& ens, double y, double bandwidth) {
    require_bandwidth(bandwidth);
    return bridge_from_columns(non_degenerate_columns(ens), y, bandwidth);
}

std::vector<GridEstimate> log_density_second_derivative(const Ensemble& ens,
                                                        std::span<const double> y_grid,
                                                        const KernelOptions& opts) {
    const auto c = non_degenerate_columns(ens);
    KernelOptions o = opts;
    o.non_degenerate_only = true;
    const double bw = kernel_bandwidth(ens, o);
    std::vector<GridEstimate> out;
    out.reserve(y_grid.size());
    for (double y : y_grid) {
        GridEstimate g;
        g.y = y;
        const auto b = bridge_from_columns(c, y, bw);
        if (b.defined) {
            g.estimate = McEstimate{b.second, b.second_se, c.x.size(), c.excluded};
            g.n_eff = b.n_eff;
        }
        out.push_back(g);
    }
    return out;
}

std::vector<GridEstimate> kernel_density(const Simulator& sim, std::span<const double> y_grid,
                                         const EnsembleConfig& cfg, const KernelOptions& opts) {
    return kernel_density(sim.ensemble(cfg), y_grid, opts);
}

std::vector<GridEstimate> kernel_g(const Simulator& sim, std::span<const double> y_grid,
                                   const EnsembleConfig& cfg, int order, const KernelOptions& opts) {
    return kernel_g(sim.ensemble(cfg), y_grid, order, opts);
}

std::vector<GridEstimate> log_density_second_derivative(const Simulator& sim,
                                                        std::span<const double> y_grid,
                                                        const EnsembleConfig& cfg,
                                                        const KernelOptions& opts) {
    return log_density_second_derivative(sim.ensemble(cfg), y_grid, opts);
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
    if (n == 0) return {};
    if (n == 1) return {0.5 * (lo + hi)};
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) {
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return g;
}

// ---------------------------------------------------------------------------

double floored_relative_error(double a, double ref, double ref_scale) {
    const double denom = std::max(std::abs(ref), 0.1 * std::abs(ref_scale));
    if (denom == 0.0) return a == ref ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(a - ref) / denom;
}

ScoreConsistencyReport check_score_consistency(const Simulator& sim, const EnsembleConfig& cfg,
                                               std::span<const double> y_grid, double p_min,
                                               std::optional<double> bandwidth) {
    const double s = cfg.fd_step_theta;
    const bool rich = cfg.richardson;
    const Ensemble center = sim.ensemble(cfg, cfg.theta);
    const Ensemble plus = sim.ensemble(cfg, cfg.theta + s);
    const Ensemble minus = sim.ensemble(cfg, cfg.theta - s);
    std::optional<Ensemble> plus_h, minus_h;
    if (rich) {
        plus_h = sim.ensemble(cfg, cfg.theta + 0.5 * s);
        minus_h = sim.ensemble(cfg, cfg.theta - 0.5 * s);
    }

    ScoreConsistencyReport rep;
    rep.p_min = p_min;
    KernelOptions opts;
    opts.non_degenerate_only = true;
    opts.bandwidth = bandwidth;
    rep.bandwidth = kernel_bandwidth(center, opts);
    opts.bandwidth = rep.bandwidth;

    auto density = [&](const Ensemble& e) { return kernel_density(e, y_grid, opts); };
    auto g1 = [&](const Ensemble& e) { return kernel_g(e, y_grid, 1, opts); };
    const auto p0 = density(center), pp = density(plus), pm = density(minus);
    const auto g0 = g1(center), gp = g1(plus), gm = g1(minus);
    const auto second = log_density_second_derivative(center, y_grid, opts);
    const auto G0 = kernel_g(center, y_grid, 2, opts);
    std::vector<GridEstimate> pph, pmh, gph, gmh;
    if (rich) {
        pph = density(*plus_h);
        pmh = density(*minus_h);
        gph = g1(*plus_h);
        gmh = g1(*minus_h);
    }

    auto value = [](const GridEstimate& g) { return g.estimate ? g.estimate->value : 0.0; };
    auto first_diff = [](double fp, double fm, double step) { return (fp - fm) / (2.0 * step); };
    auto second_diff = [](double fp, double f0, double fm, double step) {
        return (fp - 2.0 * f0 + fm) / (step * step);
    };
    auto refine = [](double coarse, double fine) { return (4.0 * fine - coarse) / 3.0; };

    for (std::size_t k = 0; k < y_grid.size(); ++k) {
        ScoreRow row;
        row.y = y_grid[k];
        row.p = value(p0[k]);
        bool ok = p0[k].estimate && row.p > p_min && value(pp[k]) > 0.0 && value(pm[k]) > 0.0 &&
                  g0[k].estimate && gp[k].estimate && gm[k].estimate && second[k].estimate &&
                  G0[k].estimate;
        if (rich) {
            ok = ok && value(pph[k]) > 0.0 && value(pmh[k]) > 0.0 && gph[k].estimate && gmh[k].estimate;
        }
        if (ok) {
            const double l0 = std::log(row.p), lp = std::log(value(pp[k])), lm = std::log(value(pm[k]));
            row.dlogp = first_diff(lp, lm, s);
            row.d2logp = second_diff(lp, l0, lm, s);
            row.dg = first_diff(value(gp[k]), value(gm[k]), s);
            if (rich) {
                const double lph = std::log(value(pph[k])), lmh = std::log(value(pmh[k]));
                row.dlogp = refine(row.dlogp, first_diff(lph, lmh, 0.5 * s));
                row.d2logp = refine(row.d2logp, second_diff(lph, l0, lmh, 0.5 * s));
                row.dg = refine(row.dg, first_diff(value(gph[k]), value(gmh[k]), 0.5 * s));
            }
            row.g = g0[k].estimate->value;
            row.g_se = g0[k].estimate->std_error;
            row.G = G0[k].estimate->value;
            row.second = second[k].estimate->value;
            row.second_se = second[k].estimate->std_error;
            row.qualifies = true;
            ++rep.qualifying;
        }
        rep.rows.push_back(row);
    }

    double scale_g = 0.0, scale_2 = 0.0;
    for (const auto& r : rep.rows) {
        if (!r.qualifies) continue;
        scale_g = std::max(scale_g, std::abs(r.dlogp));
        scale_2 = std::max(scale_2, std::abs(r.d2logp));
    }
    double scale_s = 0.0;
    for (const auto& r : rep.rows) {
        if (r.qualifies) scale_s = std::max(scale_s, std::abs(r.second));
    }
    for (const auto& r : rep.rows) {
        if (!r.qualifies) continue;
        rep.max_rel_g = std::max(rep.max_rel_g, floored_relative_error(r.g, r.dlogp, scale_g));
        rep.max_rel_second = std::max(rep.max_rel_second, floored_relative_error(r.second, r.d2logp, scale_2));
        rep.max_rel_dg = std::max(rep.max_rel_dg, floored_relative_error(r.dg, r.second, scale_s));
    }
    return rep;
}

MomentEnvelopeReport check_moment_envelope(const Simulator& sim, const EnsembleConfig& cfg,
                                           std::span<const double> x0s, std::size_t dg_points) {
    if (x0s.size() < 2) throw std::invalid_argument("moment envelope needs at least two starting points");
    MomentEnvelopeReport rep;
    const double s = cfg.fd_step_theta;
    for (double x0 : x0s) {
        EnsembleConfig c = cfg;
        c.x0 = x0;
        const Ensemble center = sim.ensemble(c, c.theta);
        const auto cols = non_degenerate_columns(center);
        if (cols.x.empty()) throw NumericalError("all paths are degenerate");

        std::vector<double> m(cols.xi2.size());
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::pow(std::abs(cols.xi2[i]), rep.xi2_power);
        const double xi2_moment = pairwise_sum(m) / static_cast<double>(m.size());

        const auto plus = non_degenerate_columns(sim.ensemble(c, c.theta + s));
        const auto minus = non_degenerate_columns(sim.ensemble(c, c.theta - s));
        const double bw = silverman_bandwidth(cols.x);
        const std::size_t npts = std::min(dg_points, cols.x.size());
        std::vector<double> dg(npts, std::numeric_limits<double>::quiet_NaN());
        parallel_for(npts, cfg.threads, [&](std::size_t i) {
            const double y = cols.x[i];
            const auto bp = local_sums(plus.x, plus.xi1, {}, y, bw);
            const auto bm = local_sums(minus.x, minus.xi1, {}, y, bw);
            if (bp.S >= kMassFloor && bm.S >= kMassFloor) {
                dg[i] = std::pow(std::abs((bp.m1 - bm.m1) / (2.0 * s)), rep.dg_power);
            }
        });
        std::vector<double> used;
        for (double v : dg) {
            if (!std::isnan(v)) used.push_back(v);
        }
        const double dg_moment =
            used.empty() ? std::numeric_limits<double>::quiet_NaN() : pairwise_sum(used) / static_cast<double>(used.size());

        rep.x0.push_back(x0);
        rep.xi2_moment.push_back(xi2_moment);
        rep.dg_moment.push_back(dg_moment);
        rep.finite = rep.finite && std::isfinite(xi2_moment) && std::isfinite(dg_moment);
    }

    auto envelope = [](double x0, double p) { return std::pow(1.0 + std::abs(x0), p); };
    for (std::size_t i = 0; i < 2; ++i) {
        rep.C_xi2 = std::max(rep.C_xi2, rep.xi2_moment[i] / envelope(rep.x0[i], rep.xi2_power));
        rep.C_dg = std::max(rep.C_dg, rep.dg_moment[i] / envelope(rep.x0[i], rep.dg_power));
    }
    for (std::size_t i = 0; i < rep.x0.size(); ++i) {
        rep.dominated = rep.dominated && rep.xi2_moment[i] / envelope(rep.x0[i], rep.xi2_power) <= rep.C_xi2 &&
                        rep.dg_moment[i] / envelope(rep.x0[i], rep.dg_power) <= rep.C_dg;
    }
    rep.dominated = rep.dominated && rep.finite;
    return rep;
}

}  // namespace levyscore

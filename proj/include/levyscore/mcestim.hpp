#pragma once

#include "levyscore/jumpsim.hpp"
#include "levyscore/malliavin.hpp"
#include "levyscore/model.hpp"
#include "levyscore/varsens.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace levyscore {

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Pairwise (tree) summation; result depends only on the input order.
double pairwise_sum(std::span<const double> v);

struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;
};

/// Sample mean and its standard error.
McEstimate mean_estimate(std::span<const double> v, std::size_t n_excluded = 0);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = all cores).
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

enum class TestFunction { one, id, sin, square, bounded_rational };

struct TestFunctionValue {
    double f, f1, f2;
};

TestFunctionValue eval_test_function(TestFunction fn, double x);
std::optional<TestFunction> parse_test_function(std::string_view name);
const char* to_string(TestFunction fn);

enum class WeightKind { none, xi1, xi2 };

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct EnsembleConfig {
    std::size_t n_paths = 10000;
    double T = 1.0;
    double x0 = 1.0;
    double theta = 1.0;
    double eps = 0.01;
    double h = 0.01;
    std::uint64_t master_seed = 1;
    double fd_step_theta = 1e-2;
    bool richardson = true;
    unsigned threads = 0;
};

void validate_config(const EnsembleConfig& cfg);

struct PathRecord {
    VariationalBundle bundle;
    MalliavinWeights weights;
};

struct Ensemble {
    double theta = 0.0;
    std::vector<PathRecord> paths;

    std::size_t size() const { return paths.size(); }
    std::size_t degenerate_count() const;
    std::vector<double> terminals() const;
};

/// Binds a model to a jump sampler for one truncation level; path i of any
/// ensemble uses the jump path drawn from mix_seed(master_seed, i), so
/// ensembles at different theta share their randomness.
class Simulator {
public:
    Simulator(Model model, double eps);

    const Model& model() const { return model_; }
    const JumpSampler& sampler() const { return sampler_; }

    JumpPath jumps(const EnsembleConfig& cfg, std::size_t path_id) const;
    PathRecord simulate_path(const EnsembleConfig& cfg, std::size_t path_id, double theta) const;
    Ensemble ensemble(const EnsembleConfig& cfg, double theta) const;
    Ensemble ensemble(const EnsembleConfig& cfg) const { return ensemble(cfg, cfg.theta); }
    /// X_T only.
    std::vector<double> terminals(const EnsembleConfig& cfg, double theta) const;

private:
    void check(const EnsembleConfig& cfg) const;

    Model model_;
    JumpSampler sampler_;
};

// ---------------------------------------------------------------------------
// Expectations and identities
// ---------------------------------------------------------------------------

/// Mean of f(X_T) * weight over non-degenerate paths. Throws when every
/// path is degenerate.
McEstimate mc_expectation(const Ensemble& ens, TestFunction fn, WeightKind weight);
McEstimate mc_expectation(const Simulator& sim, TestFunction fn, const EnsembleConfig& cfg,
                          WeightKind weight);

/// Shared randomness for the derivative identities: the weighted ensemble
/// at theta and terminal values of the same jump paths at theta +- step
/// (and +- step/2 for Richardson refinement).
struct IdentityData {
    EnsembleConfig cfg;
    Ensemble center;
    std::vector<double> plus, minus, plus_half, minus_half;
};

IdentityData prepare_identity_data(const Simulator& sim, const EnsembleConfig& cfg);

struct IdentityReport {
    int order = 1;
    TestFunction fn = TestFunction::id;
    double left = 0.0;   ///< theta finite difference of E f(X_T)
    double left_se = 0.0;
    double right = 0.0;  ///< E f(X_T) Xi
    double right_se = 0.0;
    double diff = 0.0;
    double diff_se = 0.0;  ///< paired standard error of left - right
    double z = 0.0;
    /// Pathwise form E[f' Z1] (order 1) or E[f'' Z1^2 + f' Z2] (order 2).
    double pathwise = 0.0;
    double pathwise_se = 0.0;
    double pathwise_z = 0.0;  ///< paired z of pathwise vs right
    /// Finite difference over all paths, degenerate ones included.
    double left_all_paths = 0.0;
    std::size_t n_used = 0;
    std::size_t n_excluded = 0;
    double exclusion_fraction = 0.0;
    bool valid = true;
};

/// LEFT is computed on the non-degenerate paths, the same set that carries
/// the weights; the degenerate event depends only on the jump sizes, so it
/// is the same at every theta.
IdentityReport check_derivative_identity(const IdentityData& data, int order, TestFunction fn);
IdentityReport check_derivative_identity(const Simulator& sim, int order, TestFunction fn,
                                         const EnsembleConfig& cfg);

enum class DualityFunctional { one, x_T };

struct DualityReport {
    TestFunction fn = TestFunction::sin;
    DualityFunctional g = DualityFunctional::one;
    McEstimate lhs;  ///< E[delta(G) f(X_T)]
    McEstimate rhs;  ///< E[G D f(X_T)] = E[G f'(X_T) Y1]
    double diff_se = 0.0;
    double z = 0.0;
};

DualityReport check_duality(const Ensemble& ens, TestFunction fn, DualityFunctional g);

// ---------------------------------------------------------------------------
// Kernel estimators
// ---------------------------------------------------------------------------

/// 1.06 * sd * n^{-1/5}; 1.0 when the sample has no spread.
double silverman_bandwidth(std::span<const double> samples);

struct KernelOptions {
    std::optional<double> bandwidth;
    /// Restrict the density estimate to non-degenerate paths.
    bool non_degenerate_only = false;
};

struct GridEstimate {
    double y = 0.0;
    std::optional<McEstimate> estimate;
    double n_eff = 0.0;
};

/// Gaussian KDE of `samples` on the grid.
std::vector<GridEstimate> kernel_density(std::span<const double> samples, std::span<const double> y_grid,
                                         double bandwidth);
/// Nadaraya-Watson regression of `values` on `samples`; points whose kernel
/// mass sum K < 5 K(0) are undefined.
std::vector<GridEstimate> nadaraya_watson(std::span<const double> samples, std::span<const double> values,
                                          std::span<const double> y_grid, double bandwidth);

double kernel_bandwidth(const Ensemble& ens, const KernelOptions& opts);
std::vector<GridEstimate> kernel_density(const Ensemble& ens, std::span<const double> y_grid,
                                         const KernelOptions& opts = {});
/// g-hat (order 1, Xi^1) or G-hat (order 2, Xi^2) over non-degenerate paths.
std::vector<GridEstimate> kernel_g(const Ensemble& ens, std::span<const double> y_grid, int order,
                                   const KernelOptions& opts = {});
/// G-hat - g-hat^2 with a delta-method standard error.
std::vector<GridEstimate> log_density_second_derivative(const Ensemble& ens,
                                                        std::span<const double> y_grid,
                                                        const KernelOptions& opts = {});

std::vector<GridEstimate> kernel_density(const Simulator& sim, std::span<const double> y_grid,
                                         const EnsembleConfig& cfg, const KernelOptions& opts = {});
std::vector<GridEstimate> kernel_g(const Simulator& sim, std::span<const double> y_grid,
                                   const EnsembleConfig& cfg, int order, const KernelOptions& opts = {});
std::vector<GridEstimate> log_density_second_derivative(const Simulator& sim,
                                                        std::span<const double> y_grid,
                                                        const EnsembleConfig& cfg,
                                                        const KernelOptions& opts = {});

/// g-hat, G-hat at a single point, sharing one bandwidth.
struct BridgeEstimate {
    bool defined = false;
    double g = 0.0, g_se = 0.0;
    double G = 0.0, G_se = 0.0;
    double second = 0.0, second_se = 0.0;  ///< G - g^2
    double n_eff = 0.0;
};
BridgeEstimate bridge_estimate(const Ensemble& ens, double y, double bandwidth);

std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

// ---------------------------------------------------------------------------
// Estimator-level consistency checks
// ---------------------------------------------------------------------------

struct ScoreRow {
    double y = 0.0;
    double p = 0.0;
    bool qualifies = false;    ///< p-hat above the threshold and all estimates defined
    double g = 0.0, g_se = 0.0;
    double dlogp = 0.0;        ///< d_theta log p-hat by common-random-number differences
    double G = 0.0;
    double second = 0.0, second_se = 0.0;  ///< G - g^2
    double d2logp = 0.0;       ///< second difference of log p-hat
    double dg = 0.0;           ///< d_theta g-hat by differences
};

struct ScoreConsistencyReport {
    double bandwidth = 0.0;
    double p_min = 0.05;
    std::vector<ScoreRow> rows;
    std::size_t qualifying = 0;
    double max_rel_g = 0.0;       ///< g vs dlogp
    double max_rel_second = 0.0;  ///< G - g^2 vs d2logp
    double max_rel_dg = 0.0;      ///< dg vs G - g^2
};

/// Relative error |a - ref| / max(|ref|, 0.1 max|ref|) on the qualifying rows.
double floored_relative_error(double a, double ref, double ref_scale);

/// Bandwidth defaults to the Silverman rule on the theta ensemble and is
/// held fixed across theta.
ScoreConsistencyReport check_score_consistency(const Simulator& sim, const EnsembleConfig& cfg,
                                               std::span<const double> y_grid, double p_min = 0.05,
                                               std::optional<double> bandwidth = std::nullopt);

struct MomentEnvelopeReport {
    std::vector<double> x0;
    std::vector<double> xi2_moment;  ///< E|Xi^2|^2
    std::vector<double> dg_moment;   ///< E|d_theta g-hat(x0, X_T)|^1.5
    double xi2_power = 2.0;
    double dg_power = 1.5;
    double C_xi2 = 0.0;
    double C_dg = 0.0;
    bool finite = true;
    bool dominated = true;
};

/// Moments at each x0; C is fitted on the two smallest x0 and the envelope
/// C (1 + |x0|)^p must dominate every x0.
MomentEnvelopeReport check_moment_envelope(const Simulator& sim, const EnsembleConfig& cfg,
                                           std::span<const double> x0s, std::size_t dg_points = 2000);

}  // namespace levyscore

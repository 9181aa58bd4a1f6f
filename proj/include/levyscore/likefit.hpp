#pragma once

#include "levyscore/mcestim.hpp"
#include "levyscore/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace levyscore {

/// Discrete observations x_k at strictly increasing times t_k.
struct ObservationSet {
    std::vector<double> t;
    std::vector<double> x;

    std::size_t transitions() const { return x.empty() ? 0 : x.size() - 1; }
    /// Throws std::invalid_argument on unsorted times, size mismatch or
    /// non-finite values.
    void validate() const;
};

/// CSV with header "t,x".
ObservationSet read_observations_csv(std::istream& is);
void write_observations_csv(std::ostream& os, const ObservationSet& obs);

/// Markov chain of the simulation scheme: transition k starts from x_{k-1},
/// runs the jump-adapted Euler scheme over dt with jumps drawn from
/// mix_seed(seed, k).
ObservationSet simulate_observations(const Simulator& sim, double theta, double x0, std::size_t n, double dt,
                                     double h, std::uint64_t seed);

struct LikelihoodConfig {
    std::size_t n_paths = 2000;
    double eps = 0.01;
    double h = 0.01;
    std::uint64_t master_seed = 1;
    std::optional<double> bandwidth;
    double max_drop_fraction = 0.2;
    unsigned threads = 0;
};

struct TransitionTerm {
    bool defined = false;
    double g = 0.0, g_se = 0.0;
    double second = 0.0, second_se = 0.0;  ///< G - g^2
    double bandwidth = 0.0;
    double n_eff = 0.0;
};

struct LoglikDerivatives {
    McEstimate ell1;  ///< sum of g-hat over transitions
    McEstimate ell2;  ///< sum of G-hat - g-hat^2
    std::size_t used = 0;
    std::size_t dropped = 0;
    bool reliable = true;
    std::vector<TransitionTerm> terms;
};

/// Transition k uses its own ensemble from x_{k-1} over t_k - t_{k-1}, seeded
/// by mix_seed(master_seed, k), so the estimate is a deterministic function
/// of theta for fixed seeds.
LoglikDerivatives loglik_derivatives(const Simulator& sim, const ObservationSet& obs, double theta,
                                     const LikelihoodConfig& cfg);

struct FitOptions {
    double tol = 1e-6;
    int max_iter = 30;
    double damping = 1.0;
    /// Size of the fallback step taken along sign(ell1) when ell2 >= 0.
    double gradient_step = 0.1;
};

struct ScoreTraceEntry {
    double theta = 0.0;
    double ell1 = 0.0, ell1_se = 0.0;
    double ell2 = 0.0, ell2_se = 0.0;
    std::size_t dropped = 0;
};

struct FitResult {
    double theta_hat = 0.0;
    int iterations = 0;  ///< accepted Newton steps
    std::vector<ScoreTraceEntry> score_trace;
    double observed_information = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    bool converged = false;
    bool reliable = true;
    std::string message;
};

/// Raised when the estimated information vanishes identically, i.e. the
/// drift does not depend on theta.
class UnidentifiableError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

FitResult fit(const Simulator& sim, const ObservationSet& obs, double theta0, const LikelihoodConfig& cfg,
              const FitOptions& opts = {});

}  // namespace levyscore

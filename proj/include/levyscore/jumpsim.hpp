#pragma once

#include "levyscore/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

namespace levyscore {

struct JumpEvent {
    double time = 0.0;
    double size = 0.0;
};

/// Jumps of Z with |u| >= eps on (0, T], ordered by time.
struct JumpPath {
    double T = 1.0;
    double eps = 0.0;
    std::vector<JumpEvent> events;
    /// Deterministic drift rate -int_{eps<=|u|<=1} u mu(du).
    double comp_drift = 0.0;
    std::uint64_t seed = 0;
};

/// Jump-adapted Euler skeleton. At a jump index i, x_left[i] is X(s-) and
/// x[i] the post-jump value; elsewhere x_left[i] == x[i].
struct SkeletonPath {
    std::vector<double> t;
    std::vector<double> x;
    std::vector<double> x_left;
    /// jump_index[k] is the grid index of event k.
    std::vector<std::size_t> jump_index;
    double theta = 0.0;
    double x0 = 0.0;
    double comp_drift = 0.0;

    std::size_t steps() const { return t.empty() ? 0 : t.size() - 1; }
    double terminal() const { return x.back(); }
};

/// Counter-based seed for path `index` of an ensemble (splitmix64 mixing).
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

/// Compound-Poisson sampler for mu restricted to {|u| >= eps}. The smooth
/// part is inverted through a tabulated CDF on log-spaced nodes; tail atoms
/// are drawn by mass. Immutable after construction.
class JumpSampler {
public:
    JumpSampler(const LevyMeasureSpec& levy, double eps, int nodes_per_sign = 4096);

    double eps() const { return eps_; }
    /// lambda(eps) = mu({|u| >= eps}).
    double intensity() const { return pos_mass_ + neg_mass_ + atom_mass_; }
    double comp_drift() const { return comp_drift_; }

    JumpPath sample(double T, std::uint64_t seed) const;

private:
    double draw_size(std::mt19937_64& rng) const;
    double invert(const std::vector<double>& cum, double target) const;

    double eps_;
    std::vector<double> nodes_;
    std::vector<double> pos_cum_;
    std::vector<double> neg_cum_;
    double pos_mass_ = 0.0;
    double neg_mass_ = 0.0;
    std::vector<TailAtom> atoms_;
    double atom_mass_ = 0.0;
    double comp_drift_ = 0.0;
};

JumpPath sample_jumps(const LevyMeasureSpec& levy, double T, double eps, std::uint64_t seed);

/// Explicit Euler with step <= h on a grid refined at every jump time.
SkeletonPath integrate_path(const JumpPath& jumps, const DriftSpec& drift, double theta, double x0,
                            double h);

/// int_{eps<=|u|<=u0} chi(u) sigma(u) du from the antiderivative -(sigma rho).
double compensator_chi(const LevyMeasureSpec& levy, const CutoffSpec& cutoff, double eps);
/// Same integral by adaptive quadrature.
double compensator_chi_quadrature(const LevyMeasureSpec& levy, const CutoffSpec& cutoff, double eps);

/// CSV rows (path_id, t, x, is_jump, u). Jump indices emit the post-jump x.
void write_path_csv_header(std::ostream& os);
void write_path_csv(std::ostream& os, std::size_t path_id, const SkeletonPath& skel,
                    const JumpPath& jumps);

}  // namespace levyscore

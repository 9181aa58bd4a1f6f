#pragma once

#include "levyscore/jumpsim.hpp"
#include "levyscore/model.hpp"

#include <iosfwd>

namespace levyscore {

/// Terminal pathwise sensitivities. D is the derivative along the jump-size
/// perturbation u -> Q_c(u); Z* are theta-derivatives.
struct VariationalBundle {
    double XT = 0.0;
    double Et = 1.0;   ///< dX_T / dx0 of the scheme
    double Z1 = 0.0;   ///< d_theta X
    double Z2 = 0.0;   ///< d2_theta X
    double Y1 = 0.0;   ///< D X
    double Y2 = 0.0;   ///< D^2 X
    double Y3 = 0.0;   ///< D^3 X
    double W1 = 0.0;   ///< D d_theta X
    double W2 = 0.0;   ///< D^2 d_theta X
    double V1 = 0.0;   ///< D d2_theta X
    double DEt = 0.0;
    double D2Et = 0.0;
};

/// Differentiates the Euler scheme of the skeleton: the linear sensitivity
/// cascade runs on the same grid with the same step rule as the state.
VariationalBundle propagate_sensitivities(const SkeletonPath& skel, const JumpPath& jumps,
                                          const DriftSpec& drift, const CutoffSpec& cutoff);

/// Coefficient convention for the sum-over-jumps representation of D^j X.
/// `chain_rule` is what repeated differentiation of the j = 1 sum gives;
/// `power_law` uses (i+1)^{j-i+1}/i! and is kept for comparison only.
enum class SeriesConvention { chain_rule, power_law };

double dx_series_coefficient(int i, int j, SeriesConvention conv);

/// D^j X_T (j = 1..3) from the sum over jumps
///   sum_i coef(i,j) sum_k D^{j-i-1}(E_T E_{s_k}^{-1}) rho(u_k) (rho(u_k)^i)^{(i)},
/// with the discrete propagator E and its D-derivatives built from prefix
/// products and sums along the grid.
double closed_form_DjX(const SkeletonPath& skel, const JumpPath& jumps, const DriftSpec& drift,
                       const CutoffSpec& cutoff, int j,
                       SeriesConvention conv = SeriesConvention::chain_rule);

enum class GateauxTarget { x_T, dtheta_x, d2theta_x, e_T, delta_one };

/// Inputs for re-simulating one path under perturbed jump sizes.
struct PathContext {
    const Model& model;
    const JumpPath& jumps;
    double theta = 0.0;
    double x0 = 0.0;
    double h = 0.01;
};

inline constexpr double kGateauxStep = 1e-3;
/// Third differences lose c^-3 to rounding, so they start from a wider step,
/// halved while any perturbed jump would cross the cutoff knot u1 (where
/// rho is only C^2).
inline constexpr double kGateauxStep3 = 1e-2;

/// D^order of `target` by finite differences in c of the path with every
/// jump replaced by Q_c(u_k); steps c and c/2 combined by Richardson
/// extrapolation. c <= 0 picks the default step for the order.
double gateaux_oracle(const PathContext& ctx, int order, GateauxTarget target, double c = 0.0);

struct GateauxEntries {
    double Y1 = 0.0, Y2 = 0.0, Y3 = 0.0, W1 = 0.0, W2 = 0.0, V1 = 0.0, DEt = 0.0, D2Et = 0.0,
           Ddelta1 = 0.0;
};

/// All D-derivatives of the bundle from shared sets of perturbed paths,
/// with a bound on the rounding noise each difference quotient carries.
struct GateauxBundle : GateauxEntries {
    GateauxEntries rounding;
    double step = 0.0;
    double step3 = 0.0;
};
GateauxBundle gateaux_bundle(const PathContext& ctx, double c = kGateauxStep, double c3 = kGateauxStep3);

/// Largest step <= c3 (halving, not below c3 / 16) for which no jump of the
/// +-2c stencil crosses +-u1.
double third_order_step(const PathContext& ctx, double c3 = kGateauxStep3);

/// d^order X_T / d theta^order (order 1, 2) by central differences of the
/// re-integrated path (common jumps), Richardson-extrapolated.
double theta_difference(const PathContext& ctx, int order, double step = 1e-3);
/// dX_T / dx0 by central differences.
double x0_difference(const PathContext& ctx, double step = 1e-4);

/// Bundle row (path_id, Et, Z1, Z2, Y1, Y2, Y3, W1, W2, V1).
void write_bundle_csv_header(std::ostream& os);
void write_bundle_csv(std::ostream& os, std::size_t path_id, const VariationalBundle& b);

}  // namespace levyscore

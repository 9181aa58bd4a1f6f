#pragma once

#include "levyscore/jumpsim.hpp"
#include "levyscore/model.hpp"
#include "levyscore/varsens.hpp"

#include <iosfwd>
#include <optional>

namespace levyscore {

/// Paths with D X_T below this value carry no usable weight.
inline constexpr double kDegeneracyThreshold = 1e-12;

struct MalliavinWeights {
    double delta1 = 0.0;
    double d_delta1 = 0.0;
    std::optional<double> xi1;
    std::optional<double> delta_ratio;    ///< delta((d_theta X)^2 / DX)
    std::optional<double> d_delta_ratio;  ///< D of delta_ratio
    std::optional<double> xi2;
    bool degenerate = true;
};

/// delta(1) = sum_k chi(u_k) 1{|u_k| <= u0} - T * compensator_chi(eps).
double delta_one(const JumpPath& jumps, const LevyMeasureSpec& levy, const CutoffSpec& cutoff);

/// D delta(1) = sum_k (chi' rho)(u_k); the compensator does not move with c.
double d_delta_one(const JumpPath& jumps, const LevyMeasureSpec& levy, const CutoffSpec& cutoff);

/// delta(G) = delta(1) G - DG.
inline double divergence(double g, double dg, double delta1) { return delta1 * g - dg; }

/// delta(Z1 / Y1). Empty when the path is degenerate.
std::optional<double> xi1(const VariationalBundle& b, double delta1,
                          double y_min = kDegeneracyThreshold);

/// Closed-form expansion of delta((delta(Z1^2/Y1) + Z2) / Y1).
std::optional<double> xi2(const VariationalBundle& b, double delta1, double d_delta1,
                          double y_min = kDegeneracyThreshold);

/// Same functional evaluated by applying `divergence` twice to D-jets built
/// with the product and quotient rules from the bundle entries.
std::optional<double> xi2_nested(const VariationalBundle& b, double delta1, double d_delta1,
                                 double y_min = kDegeneracyThreshold);

MalliavinWeights compute_weights(const JumpPath& jumps, const VariationalBundle& b,
                                 const LevyMeasureSpec& levy, const CutoffSpec& cutoff,
                                 double y_min = kDegeneracyThreshold);

/// Weights row (path_id, delta1, d_delta1, xi1, xi2, degenerate); undefined
/// weights are written as empty fields.
void write_weights_csv_header(std::ostream& os);
void write_weights_csv(std::ostream& os, std::size_t path_id, const MalliavinWeights& w);

}  // namespace levyscore

#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace levyscore {

/// Raised when a numerical routine cannot produce a finite result.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double clamp(double v) const { return v < lo ? lo : (v > hi ? hi : v); }
};

/// All partial derivatives of the drift a_theta(x) used by the sensitivity
/// cascade. Suffix letters name the differentiation variables.
struct DriftDerivs {
    double a = 0.0;
    double a_x = 0.0;
    double a_t = 0.0;
    double a_xx = 0.0;
    double a_xt = 0.0;
    double a_tt = 0.0;
    double a_xxx = 0.0;
    double a_xxt = 0.0;
    double a_xtt = 0.0;
    double a_xxxt = 0.0;
};

/// Drift family a_theta(x). Derivatives are supplied analytically.
struct DriftSpec {
    std::string name;
    std::function<DriftDerivs(double theta, double x)> derivs;
    double growth_constant = 0.0;
    Interval theta_domain{-1e300, 1e300};

    /// Orders (order_x, order_theta) that may be requested.
    static bool supported(int order_x, int order_theta);

    /// d^{order_x}/dx d^{order_theta}/dtheta a_theta(x). Unsupported pairs
    /// throw std::invalid_argument.
    double eval(int order_x, int order_theta, double theta, double x) const;
};

struct TailAtom {
    double u = 0.0;
    double mass = 0.0;
};

/// Levy measure: smooth positive density sigma on [-u0,0)u(0,u0] plus a
/// finite atomic part on |u| > u0.
struct LevyMeasureSpec {
    std::string name;
    double u0 = 1.0;
    std::function<double(double)> sigma;
    std::function<double(double)> sigma_prime;
    std::function<double(double)> sigma_second;
    double C0 = 0.0;
    double kappa = 1.0;
    std::vector<TailAtom> tail;
    bool symmetric = false;

    /// Density sigma(u) for 0 < |u| <= u0, zero elsewhere.
    double density(double u) const;
    /// mu({|u| >= eps}) restricted to the smooth part (quadrature).
    double smooth_mass_above(double eps) const;
    double tail_mass() const;
};

/// Cutoff rho: u^2 on |u| <= u1, zero beyond u0, C^2 in between.
struct CutoffSpec {
    double u1 = 0.5;
    double u0 = 1.0;
    std::function<double(double)> rho;
    std::function<double(double)> rho_prime;
    std::function<double(double)> rho_second;
};

/// Quintic-smoothstep taper rho(u) = u^2 (1 - S(r)), r = (|u|-u1)/(u0-u1).
CutoffSpec make_quintic_cutoff(double u1, double u0);

/// Complete model: drift, Levy measure and cutoff.
struct Model {
    DriftSpec drift;
    LevyMeasureSpec levy;
    CutoffSpec cutoff;
};

// Built-in components.
DriftSpec make_ou_drift(Interval theta_domain = {-5.0, 5.0});
DriftSpec make_tanh_drift(Interval theta_domain = {-5.0, 5.0});
/// Drift that does not depend on theta: a(x) = -k x.
DriftSpec make_theta_free_drift(double k);
LevyMeasureSpec make_constant_sigma(double s0, double u0, std::vector<TailAtom> tail = {});
/// sigma(u) = c |u|^{-1-alpha}, alpha in (0, 2).
LevyMeasureSpec make_stable_like(double c, double alpha, double u0, std::vector<TailAtom> tail = {});

enum class CheckStatus { pass, fail, info };

struct CheckResult {
    std::string name;
    CheckStatus status = CheckStatus::pass;
    std::optional<double> witness;
    std::string detail;
};

struct ValidationReport {
    std::vector<CheckResult> checks;

    bool all_passed() const;
    const CheckResult* find(const std::string& name) const;
};

const char* to_string(CheckStatus s);

ValidationReport validate_model(const DriftSpec& drift, const LevyMeasureSpec& levy,
                                const CutoffSpec& cutoff);
inline ValidationReport validate_model(const Model& m) {
    return validate_model(m.drift, m.levy, m.cutoff);
}

/// chi(u) = -(sigma rho)'(u) / sigma(u); zero for |u| > u0. Throws
/// std::domain_error at u = 0.
double chi(double u, const LevyMeasureSpec& levy, const CutoffSpec& cutoff);
/// d chi / du, zero for |u| > u0.
double chi_prime(double u, const LevyMeasureSpec& levy, const CutoffSpec& cutoff);

/// Q_c(x): solution at s = c of q' = rho(q), q(0) = x.
double flow_Q(double c, double x, const CutoffSpec& cutoff);

}  // namespace levyscore

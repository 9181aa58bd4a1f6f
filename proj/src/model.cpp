#include "levyscore/model.hpp"

#include "levyscore/quadrature.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace levyscore {

namespace {

constexpr std::array<std::pair<int, int>, 10> kSupportedOrders = {{
    {0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {3, 1},
}};

double pick(const DriftDerivs& d, int ox, int ot) {
    switch (ox * 10 + ot) {
        case 0: return d.a;
        case 10: return d.a_x;
        case 1: return d.a_t;
        case 20: return d.a_xx;
        case 11: return d.a_xt;
        case 2: return d.a_tt;
        case 30: return d.a_xxx;
        case 21: return d.a_xxt;
        case 12: return d.a_xtt;
        case 31: return d.a_xxxt;
        default: break;
    }
    throw std::invalid_argument("unsupported drift derivative order");
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

bool DriftSpec::supported(int order_x, int order_theta) {
    return std::any_of(kSupportedOrders.begin(), kSupportedOrders.end(), [&](const auto& p) {
        return p.first == order_x && p.second == order_theta;
    });
}

double DriftSpec::eval(int order_x, int order_theta, double theta, double x) const {
    if (!supported(order_x, order_theta)) {
        throw std::invalid_argument("drift derivative (" + std::to_string(order_x) + "," +
                                    std::to_string(order_theta) + ") is not supported");
    }
    return pick(derivs(theta, x), order_x, order_theta);
}

double LevyMeasureSpec::density(double u) const {
    if (u == 0.0 || std::abs(u) > u0) return 0.0;
    return sigma(u);
}

double LevyMeasureSpec::smooth_mass_above(double eps) const {
    if (eps >= u0) return 0.0;
    auto pos = [this](double u) { return sigma(u); };
    auto neg = [this](double u) { return sigma(-u); };
    return integrate_positive(pos, eps, u0) + integrate_positive(neg, eps, u0);
}

double LevyMeasureSpec::tail_mass() const {
    double m = 0.0;
    for (const auto& a : tail) m += a.mass;
    return m;
}

CutoffSpec make_quintic_cutoff(double u1, double u0) {
    if (!(u1 > 0.0 && u1 < u0)) throw std::invalid_argument("cutoff requires 0 < u1 < u0");
    const double width = u0 - u1;
    CutoffSpec c;
    c.u1 = u1;
    c.u0 = u0;
    c.rho = [=](double u) {
        const double a = std::abs(u);
        if (a <= u1) return u * u;
        if (a >= u0) return 0.0;
        const double r = (a - u1) / width;
        const double s = r * r * r * (10.0 + r * (-15.0 + 6.0 * r));
        return u * u * (1.0 - s);
    };
    c.rho_prime = [=](double u) {
        const double a = std::abs(u);
        if (a <= u1) return 2.0 * u;
        if (a >= u0) return 0.0;
        const double r = (a - u1) / width;
        const double s = r * r * r * (10.0 + r * (-15.0 + 6.0 * r));
        const double ds = 30.0 * r * r * (1.0 - r) * (1.0 - r) / width;
        const double d = 2.0 * a * (1.0 - s) - a * a * ds;
        return u < 0.0 ? -d : d;
    };
    c.rho_second = [=](double u) {
        const double a = std::abs(u);
        if (a <= u1) return 2.0;
        if (a >= u0) return 0.0;
        const double r = (a - u1) / width;
        const double s = r * r * r * (10.0 + r * (-15.0 + 6.0 * r));
        const double ds = 30.0 * r * r * (1.0 - r) * (1.0 - r) / width;
        const double dds = 60.0 * r * (1.0 - r) * (1.0 - 2.0 * r) / (width * width);
        return 2.0 * (1.0 - s) - 4.0 * a * ds - a * a * dds;
    };
    return c;
}

DriftSpec make_ou_drift(Interval theta_domain) {
    DriftSpec d;
    d.name = "ou-drift";
    d.theta_domain = theta_domain;
    d.growth_constant = std::max(std::abs(theta_domain.lo), std::abs(theta_domain.hi)) + 1.0;
    d.derivs = [](double theta, double x) {
        DriftDerivs r;
        r.a = -theta * x;
        r.a_x = -theta;
        r.a_t = -x;
        r.a_xt = -1.0;
        return r;
    };
    return d;
}

DriftSpec make_tanh_drift(Interval theta_domain) {
    DriftSpec d;
    d.name = "tanh-drift";
    d.theta_domain = theta_domain;
    d.growth_constant = std::max(std::abs(theta_domain.lo), std::abs(theta_domain.hi)) + 1.0;
    d.derivs = [](double theta, double x) {
        const double t = std::tanh(x);
        const double s2 = 1.0 - t * t;  // sech^2
        const double k3 = 2.0 * s2 * (s2 - 2.0 * t * t);
        DriftDerivs r;
        r.a = -theta * t;
        r.a_x = -theta * s2;
        r.a_t = -t;
        r.a_xx = 2.0 * theta * s2 * t;
        r.a_xt = -s2;
        r.a_tt = 0.0;
        r.a_xxx = theta * k3;
        r.a_xxt = 2.0 * s2 * t;
        r.a_xtt = 0.0;
        r.a_xxxt = k3;
        return r;
    };
    return d;
}

DriftSpec make_theta_free_drift(double k) {
    DriftSpec d;
    d.name = "theta-free";
    d.theta_domain = {-5.0, 5.0};
    d.growth_constant = std::abs(k) + 1.0;
    d.derivs = [k](double, double x) {
        DriftDerivs r;
        r.a = -k * x;
        r.a_x = -k;
        return r;
    };
    return d;
}

namespace {

bool tail_is_symmetric(const std::vector<TailAtom>& tail) {
    for (const auto& a : tail) {
        const bool mirrored = std::any_of(tail.begin(), tail.end(), [&](const TailAtom& b) {
            return b.u == -a.u && b.mass == a.mass;
        });
        if (!mirrored) return false;
    }
    return true;
}

}  // namespace

LevyMeasureSpec make_constant_sigma(double s0, double u0, std::vector<TailAtom> tail) {
    if (!(s0 > 0.0) || !(u0 > 0.0)) throw std::invalid_argument("constant-sigma requires s0, u0 > 0");
    LevyMeasureSpec m;
    m.name = "constant-sigma";
    m.u0 = u0;
    m.sigma = [s0](double) { return s0; };
    m.sigma_prime = [](double) { return 0.0; };
    m.sigma_second = [](double) { return 0.0; };
    m.C0 = 0.0;
    m.kappa = 1.0;
    m.symmetric = tail_is_symmetric(tail);
    m.tail = std::move(tail);
    return m;
}

LevyMeasureSpec make_stable_like(double c, double alpha, double u0, std::vector<TailAtom> tail) {
    if (!(c > 0.0) || !(alpha > 0.0 && alpha < 2.0) || !(u0 > 0.0)) {
        throw std::invalid_argument("stable-like requires c > 0, alpha in (0,2), u0 > 0");
    }
    LevyMeasureSpec m;
    m.name = "stable-like";
    m.u0 = u0;
    const double p = 1.0 + alpha;
    m.sigma = [=](double u) { return c * std::pow(std::abs(u), -p); };
    m.sigma_prime = [=](double u) {
        const double a = std::abs(u);
        const double d = -p * c * std::pow(a, -p - 1.0);
        return u < 0.0 ? -d : d;
    };
    m.sigma_second = [=](double u) { return p * (p + 1.0) * c * std::pow(std::abs(u), -p - 2.0); };
    m.C0 = p * (p + 1.0);
    m.kappa = 1.0;
    m.symmetric = tail_is_symmetric(tail);
    m.tail = std::move(tail);
    return m;
}

bool ValidationReport::all_passed() const {
    return std::none_of(checks.begin(), checks.end(),
                        [](const CheckResult& c) { return c.status == CheckStatus::fail; });
}

const CheckResult* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks) {
        if (c.name == name) return &c;
    }
    return nullptr;
}

const char* to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::fail: return "fail";
        case CheckStatus::info: return "info";
    }
    return "?";
}

namespace {

CheckResult make_check(std::string name, std::optional<double> witness, std::string detail) {
    CheckResult r;
    r.name = std::move(name);
    r.status = witness ? CheckStatus::fail : CheckStatus::pass;
    r.witness = witness;
    r.detail = std::move(detail);
    return r;
}

// Grid on (0, u0] log-spaced, mirrored to negative values.
std::vector<double> symmetric_log_grid(double u0, int n) {
    std::vector<double> g;
    g.reserve(2 * n);
    const double lo = std::log(u0 * 1e-6);
    const double hi = std::log(u0);
    for (int i = 0; i < n; ++i) {
        const double u = std::exp(lo + (hi - lo) * i / (n - 1));
        g.push_back(u);
        g.push_back(-u);
    }
    return g;
}

void validate_drift(const DriftSpec& drift, ValidationReport& rep) {
    // Availability of all supported orders; unsupported orders must throw.
    {
        std::optional<double> witness;
        std::string detail = "all derivative orders of the cascade finite";
        const double th = drift.theta_domain.clamp(0.5);
        for (const auto& [ox, ot] : kSupportedOrders) {
            if (!std::isfinite(drift.eval(ox, ot, th, 0.3))) {
                witness = ox * 10 + ot;
                detail = "non-finite derivative order (" + std::to_string(ox) + "," +
                         std::to_string(ot) + ")";
                break;
            }
        }
        bool rejects = false;
        try {
            drift.eval(4, 0, th, 0.3);
        } catch (const std::invalid_argument&) {
            rejects = true;
        }
        if (!rejects && !witness) {
            witness = 40;
            detail = "unsupported order (4,0) did not raise";
        }
        rep.checks.push_back(make_check("drift.derivatives_available", witness, detail));
    }

    // Finite-difference cross-check of each supplied derivative.
    {
        struct Pair { int ox, ot, lower_ox, lower_ot; bool in_x; };
        constexpr std::array<Pair, 9> pairs = {{
            {1, 0, 0, 0, true}, {0, 1, 0, 0, false}, {2, 0, 1, 0, true},
            {1, 1, 1, 0, false}, {0, 2, 0, 1, false}, {3, 0, 2, 0, true},
            {2, 1, 2, 0, false}, {1, 2, 1, 1, false}, {3, 1, 3, 0, false},
        }};
        std::mt19937_64 rng(20240611ULL);
        const double tlo = std::max(drift.theta_domain.lo, -3.0);
        const double thi = std::min(drift.theta_domain.hi, 3.0);
        std::uniform_real_distribution<double> th_dist(tlo, thi);
        std::uniform_real_distribution<double> x_dist(-3.0, 3.0);
        std::optional<double> witness;
        std::string detail = "all derivatives match central differences (tol 1e-5)";
        const double step = 1e-5;
        for (int trial = 0; trial < 25 && !witness; ++trial) {
            const double th = th_dist(rng);
            const double x = x_dist(rng);
            for (const auto& p : pairs) {
                const double exact = drift.eval(p.ox, p.ot, th, x);
                double fd;
                if (p.in_x) {
                    fd = (drift.eval(p.lower_ox, p.lower_ot, th, x + step) -
                          drift.eval(p.lower_ox, p.lower_ot, th, x - step)) / (2.0 * step);
                } else {
                    fd = (drift.eval(p.lower_ox, p.lower_ot, th + step, x) -
                          drift.eval(p.lower_ox, p.lower_ot, th - step, x)) / (2.0 * step);
                }
                if (std::abs(exact - fd) > 1e-5 * (1.0 + std::abs(exact))) {
                    witness = x;
                    detail = "order (" + std::to_string(p.ox) + "," + std::to_string(p.ot) +
                             ") mismatch at theta=" + fmt_double(th) + " x=" + fmt_double(x);
                    break;
                }
            }
        }
        rep.checks.push_back(make_check("drift.finite_difference", witness, detail));
    }

    // Linear growth of |a| + |d_theta a| + |d2_theta a|; witness is the worst point.
    {
        const double lo = std::max(drift.theta_domain.lo, -1e3);
        const double hi = std::min(drift.theta_domain.hi, 1e3);
        const std::array<double, 3> thetas = {lo, 0.5 * (lo + hi), hi};
        double worst = 0.0;
        double worst_x = 0.0;
        for (double th : thetas) {
            for (int i = -100; i <= 100; ++i) {
                const double x = 0.1 * i;
                const auto d = drift.derivs(th, x);
                const double ratio = (std::abs(d.a) + std::abs(d.a_t) + std::abs(d.a_tt)) /
                                     (drift.growth_constant * (1.0 + std::abs(x)));
                if (ratio >= worst) {
                    worst = ratio;
                    worst_x = x;
                }
            }
        }
        std::optional<double> witness;
        if (!(worst <= 1.0 + 1e-12)) witness = worst_x;
        rep.checks.push_back(make_check("drift.linear_growth", witness,
                                        "max ratio to C(1+|x|) = " + fmt_double(worst)));
    }

    // Bounded x-derivatives: the sup over a wide window must not keep growing.
    {
        auto sup_on = [&](double radius) {
            double s = 0.0;
            const double th = drift.theta_domain.clamp(1.0);
            for (int i = -200; i <= 200; ++i) {
                const double x = radius * i / 200.0;
                const auto d = drift.derivs(th, x);
                for (double v : {d.a_x, d.a_xx, d.a_xt, d.a_xxx, d.a_xxt, d.a_xtt, d.a_xxxt}) {
                    s = std::max(s, std::abs(v));
                }
            }
            return s;
        };
        const double near = sup_on(10.0);
        const double far = sup_on(1000.0);
        std::optional<double> witness;
        if (!std::isfinite(far) || far > 10.0 * near + 1e-12) witness = 1000.0;
        rep.checks.push_back(make_check("drift.bounded_derivatives", witness,
                                        "sup |x|<=10: " + fmt_double(near) +
                                            ", sup |x|<=1000: " + fmt_double(far)));
    }
}

void validate_levy(const LevyMeasureSpec& levy, ValidationReport& rep) {
    const auto grid = symmetric_log_grid(levy.u0, 400);

    {
        std::optional<double> witness;
        for (double u : grid) {
            const double s = levy.sigma(u);
            if (!(s > 0.0) || !std::isfinite(s)) {
                witness = u;
                break;
            }
        }
        rep.checks.push_back(make_check("levy.positive_density", witness,
                                        "sigma > 0 on sampled (0, u0]"));
    }
    {
        std::optional<double> witness;
        std::string detail = "|sigma'| <= C0 |u|^-1 sigma";
        for (double u : grid) {
            if (std::abs(levy.sigma_prime(u)) > levy.C0 * levy.sigma(u) / std::abs(u) * (1.0 + 1e-12)) {
                witness = u;
                break;
            }
        }
        rep.checks.push_back(make_check("levy.sigma_prime_bound", witness, detail));
    }
    {
        std::optional<double> witness;
        for (double u : grid) {
            if (std::abs(levy.sigma_second(u)) > levy.C0 * levy.sigma(u) / (u * u) * (1.0 + 1e-12)) {
                witness = u;
                break;
            }
        }
        rep.checks.push_back(make_check("levy.sigma_second_bound", witness, "|sigma''| <= C0 u^-2 sigma"));
    }
    {
        double moment = 0.0;
        if (levy.u0 > 1.0) {
            const double k = levy.kappa;
            moment += integrate_positive(
                [&](double u) { return std::pow(u, 2.0 + k) * (levy.sigma(u) + levy.sigma(-u)); },
                1.0, levy.u0);
        }
        for (const auto& a : levy.tail) {
            if (std::abs(a.u) >= 1.0) moment += std::pow(std::abs(a.u), 2.0 + levy.kappa) * a.mass;
        }
        std::optional<double> witness;
        if (!(levy.kappa > 0.0) || !std::isfinite(moment)) witness = levy.kappa;
        rep.checks.push_back(make_check("levy.moment", witness,
                                        "int_{|u|>=1} u^{2+kappa} mu(du) = " + fmt_double(moment)));
    }
    {
        std::optional<double> witness;
        std::string detail;
        for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
            const double lam = levy.smooth_mass_above(std::min(eps, levy.u0)) + levy.tail_mass();
            detail += "lambda(" + fmt_double(eps) + ")=" + fmt_double(lam) + " ";
            if (!std::isfinite(lam)) {
                witness = eps;
                break;
            }
        }
        rep.checks.push_back(make_check("levy.finite_mass", witness, detail));
    }
    {
        std::optional<double> witness;
        for (const auto& a : levy.tail) {
            if (!(std::abs(a.u) > levy.u0) || !(a.mass >= 0.0)) {
                witness = a.u;
                break;
            }
        }
        rep.checks.push_back(make_check("levy.tail_atoms", witness, "atoms outside [-u0,u0], mass >= 0"));
    }
    {
        // Divergence rate (log 1/eps)^-1 mu(|u| >= eps); reported only.
        CheckResult r;
        r.name = "levy.activity_rate";
        r.status = CheckStatus::info;
        double prev = -1.0;
        bool increasing = true;
        for (double eps : {1e-2, 1e-4, 1e-6}) {
            const double e = std::min(eps, levy.u0);
            const double rate = (levy.smooth_mass_above(e) + levy.tail_mass()) / std::log(1.0 / eps);
            r.detail += "eps=" + fmt_double(eps) + ":" + fmt_double(rate) + " ";
            if (rate <= prev * 1.5) increasing = false;
            prev = rate;
        }
        r.detail += increasing ? "(diverging)" : "(not diverging: finite-activity model)";
        rep.checks.push_back(r);
    }
}

void validate_cutoff(const CutoffSpec& cutoff, const LevyMeasureSpec& levy, ValidationReport& rep) {
    {
        std::optional<double> witness;
        if (!(cutoff.u1 > 0.0 && cutoff.u1 < cutoff.u0)) witness = cutoff.u1;
        else if (std::abs(cutoff.u0 - levy.u0) > 1e-14 * levy.u0) witness = cutoff.u0;
        rep.checks.push_back(make_check("cutoff.radii", witness, "0 < u1 < u0 and u0 matches the Levy measure"));
    }
    {
        std::optional<double> witness;
        for (int i = -200; i <= 200 && !witness; ++i) {
            const double u = cutoff.u1 * i / 200.0;
            if (std::abs(cutoff.rho(u) - u * u) > 1e-14 * (1.0 + u * u)) witness = u;
        }
        rep.checks.push_back(make_check("cutoff.quadratic_core", witness, "rho(u) = u^2 on |u| <= u1"));
    }
    {
        std::optional<double> witness;
        for (int i = 0; i <= 400 && !witness; ++i) {
            const double u = cutoff.u0 * (1.0 + 2.0 * i / 400.0);
            if (cutoff.rho(u) != 0.0) witness = u;
            else if (cutoff.rho(-u) != 0.0) witness = -u;
        }
        rep.checks.push_back(make_check("cutoff.support", witness, "rho(u) = 0 for |u| >= u0"));
    }
    {
        std::optional<double> witness;
        double sup_d = 0.0;
        for (int i = -1000; i <= 1000 && !witness; ++i) {
            const double u = 1.5 * cutoff.u0 * i / 1000.0;
            const double r = cutoff.rho(u);
            if (!(r >= 0.0) || r > u * u * (1.0 + 1e-14)) witness = u;
            sup_d = std::max(sup_d, std::abs(cutoff.rho_prime(u)));
        }
        if (!witness && !std::isfinite(sup_d)) witness = 0.0;
        rep.checks.push_back(make_check("cutoff.sandwich", witness,
                                        "0 <= rho <= u^2, sup|rho'| = " + fmt_double(sup_d)));
    }
    {
        // One-sided limits at the junctions, for rho, rho', rho''; plus
        // consistency of the supplied derivatives with one-sided differences.
        const double eta = 1e-7;
        const double fd = 1e-5;
        std::optional<double> witness;
        std::string detail = "rho, rho', rho'' continuous at +-u1, +-u0";
        const std::array<std::pair<const std::function<double(double)>*, const char*>, 3> fns = {{
            {&cutoff.rho, "rho"}, {&cutoff.rho_prime, "rho'"}, {&cutoff.rho_second, "rho''"},
        }};
        for (double p : {cutoff.u1, -cutoff.u1, cutoff.u0, -cutoff.u0}) {
            for (const auto& [f, label] : fns) {
                const double left = (*f)(p - eta);
                const double right = (*f)(p + eta);
                if (std::abs(left - right) > 1e-4 * (1.0 + std::abs(left))) {
                    witness = p;
                    detail = std::string(label) + " jumps at " + fmt_double(p);
                    break;
                }
            }
            if (witness) break;
            // second-order one-sided differences; rho''' may jump at p
            auto left_diff = [&](const std::function<double(double)>& f) {
                return (3.0 * f(p) - 4.0 * f(p - fd) + f(p - 2.0 * fd)) / (2.0 * fd);
            };
            auto right_diff = [&](const std::function<double(double)>& f) {
                return (-3.0 * f(p) + 4.0 * f(p + fd) - f(p + 2.0 * fd)) / (2.0 * fd);
            };
            const double dl = left_diff(cutoff.rho);
            const double dr = right_diff(cutoff.rho);
            const double d2l = left_diff(cutoff.rho_prime);
            const double d2r = right_diff(cutoff.rho_prime);
            const double rp = cutoff.rho_prime(p);
            const double rs = cutoff.rho_second(p);
            if (std::abs(dl - rp) > 1e-4 * (1.0 + std::abs(rp)) ||
                std::abs(dr - rp) > 1e-4 * (1.0 + std::abs(rp)) ||
                std::abs(d2l - rs) > 1e-4 * (1.0 + std::abs(rs)) ||
                std::abs(d2r - rs) > 1e-4 * (1.0 + std::abs(rs))) {
                witness = p;
                detail = "one-sided differences disagree with supplied derivatives at " + fmt_double(p);
                break;
            }
        }
        rep.checks.push_back(make_check("cutoff.C2", witness, detail));
    }
}

}  // namespace

ValidationReport validate_model(const DriftSpec& drift, const LevyMeasureSpec& levy,
                                const CutoffSpec& cutoff) {
    ValidationReport rep;
    validate_drift(drift, rep);
    validate_levy(levy, rep);
    validate_cutoff(cutoff, levy, rep);
    return rep;
}

double chi(double u, const LevyMeasureSpec& levy, const CutoffSpec& cutoff) {
    if (u == 0.0) throw std::domain_error("chi is undefined at u = 0");
    if (std::abs(u) > levy.u0) return 0.0;
    return -(levy.sigma_prime(u) * cutoff.rho(u) / levy.sigma(u) + cutoff.rho_prime(u));
}

double chi_prime(double u, const LevyMeasureSpec& levy, const CutoffSpec& cutoff) {
    if (u == 0.0) throw std::domain_error("chi' is undefined at u = 0");
    if (std::abs(u) > levy.u0) return 0.0;
    const double s = levy.sigma(u);
    const double s1 = levy.sigma_prime(u) / s;
    const double s2 = levy.sigma_second(u) / s;
    const double r = cutoff.rho(u);
    const double r1 = cutoff.rho_prime(u);
    const double r2 = cutoff.rho_second(u);
    // chi = -(s1 r + r1), s1' = s2 - s1^2
    return -((s2 - s1 * s1) * r + s1 * r1 + r2);
}

double flow_Q(double c, double x, const CutoffSpec& cutoff) {
    if (c == 0.0 || cutoff.rho(x) == 0.0) return x;
    namespace ode = boost::numeric::odeint;
    using stepper_t = ode::runge_kutta_fehlberg78<double, double, double, double,
                                                   ode::vector_space_algebra>;
    auto rhs = [&cutoff](const double& q, double& dq, double) { dq = cutoff.rho(q); };
    double q = x;
    try {
        auto stepper = ode::make_controlled(1e-16, 1e-14, stepper_t());
        ode::integrate_adaptive(stepper, rhs, q, 0.0, c, c / 4.0);
    } catch (const std::exception& e) {
        throw NumericalError(std::string("flow_Q integration failure: ") + e.what());
    }
    if (!std::isfinite(q)) throw NumericalError("flow_Q produced a non-finite value");
    return q;
}

}  // namespace levyscore

#include "doctest.h"

#include "levyscore/model.hpp"

#include <cmath>

using namespace levyscore;

namespace {

DriftSpec square_drift() {
    DriftSpec d;
    d.name = "square";
    d.growth_constant = 1.0;
    d.theta_domain = {-5.0, 5.0};
    d.derivs = [](double, double x) {
        DriftDerivs r;
        r.a = x * x;
        r.a_x = 2.0 * x;
        r.a_xx = 2.0;
        return r;
    };
    return d;
}

}  // namespace

TEST_CASE("chi on the quadratic core") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    CHECK(chi(0.1, make_constant_sigma(1.0, 1.0), cut) == doctest::Approx(-0.2).epsilon(1e-14));
    CHECK(chi(0.2, make_stable_like(1.0, 1.5, 1.0), cut) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(chi(1.5, make_constant_sigma(1.0, 1.0), cut) == 0.0);
    CHECK_THROWS_AS(chi(0.0, make_constant_sigma(1.0, 1.0), cut), std::domain_error);
}

TEST_CASE("chi_prime matches differences of chi") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    const auto levy = make_stable_like(0.5, 1.2, 1.0);
    for (double u : {-0.9, -0.6, -0.3, 0.05, 0.45, 0.55, 0.8}) {
        const double h = 1e-6;
        const double fd = (chi(u + h, levy, cut) - chi(u - h, levy, cut)) / (2 * h);
        CHECK(chi_prime(u, levy, cut) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("chi linear bound on the core") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    for (const auto& levy : {make_constant_sigma(1.0, 1.0), make_stable_like(0.5, 1.0, 1.0),
                             make_stable_like(2.0, 1.7, 1.0)}) {
        for (int i = 1; i <= 500; ++i) {
            const double u = 0.5 * i / 500.0;
            CHECK(std::abs(chi(u, levy, cut)) <= (levy.C0 + 2.0) * u * (1 + 1e-12));
            CHECK(std::abs(chi(-u, levy, cut)) <= (levy.C0 + 2.0) * u * (1 + 1e-12));
        }
    }
}

TEST_CASE("flow_Q") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    CHECK(flow_Q(0.0, 0.37, cut) == 0.37);
    CHECK(flow_Q(0.0, -0.8, cut) == -0.8);
    CHECK(flow_Q(2.0, 0.0, cut) == 0.0);
    CHECK(flow_Q(-1.0, 0.0, cut) == 0.0);
    // q' = q^2 in the core: q = x / (1 - c x)
    CHECK(flow_Q(1.0, 0.1, cut) == doctest::Approx(0.1 / 0.9).epsilon(1e-12));
    CHECK(flow_Q(-2.0, 0.2, cut) == doctest::Approx(0.2 / 1.4).epsilon(1e-12));
    CHECK(flow_Q(0.5, -0.3, cut) == doctest::Approx(-0.3 / 1.15).epsilon(1e-12));
    // group property across the taper
    const double a = flow_Q(0.3, flow_Q(0.4, 0.45, cut), cut);
    CHECK(a == doctest::Approx(flow_Q(0.7, 0.45, cut)).epsilon(1e-9));
    // points outside the support stay put
    CHECK(flow_Q(3.0, 1.2, cut) == 1.2);
}

TEST_CASE("quintic cutoff shape") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    CHECK(cut.rho(0.3) == doctest::Approx(0.09));
    CHECK(cut.rho(-0.5) == doctest::Approx(0.25));
    CHECK(cut.rho(1.0) == 0.0);
    CHECK(cut.rho(-1.3) == 0.0);
    for (int i = -150; i <= 150; ++i) {
        const double u = i / 100.0;
        CHECK(cut.rho(u) >= 0.0);
        CHECK(cut.rho(u) <= u * u + 1e-15);
    }
    CHECK_THROWS_AS(make_quintic_cutoff(1.0, 1.0), std::invalid_argument);
}

TEST_CASE("built-in models pass validation") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    for (const auto& drift : {make_ou_drift(), make_tanh_drift()}) {
        for (const auto& levy : {make_constant_sigma(1.0, 1.0), make_stable_like(0.5, 1.0, 1.0, {{2.0, 0.1}})}) {
            const auto rep = validate_model(drift, levy, cut);
            INFO(drift.name, " / ", levy.name);
            CHECK(rep.all_passed());
            REQUIRE(rep.find("levy.activity_rate") != nullptr);
            CHECK(rep.find("levy.activity_rate")->status == CheckStatus::info);
        }
    }
}

TEST_CASE("density derivative bounds with sigma = |u|^-1.5 / 2") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    auto levy = make_stable_like(0.5, 0.5, 1.0);
    // sigma''/sigma = 1.5 * 2.5 / u^2, so the smallest valid C0 is 3.75
    levy.C0 = 3.75;
    CHECK(validate_model(make_ou_drift(), levy, cut).all_passed());
    levy.C0 = 3.0;
    const auto rep = validate_model(make_ou_drift(), levy, cut);
    CHECK(rep.find("levy.sigma_prime_bound")->status == CheckStatus::pass);
    CHECK(rep.find("levy.sigma_second_bound")->status == CheckStatus::fail);
}

TEST_CASE("cutoff with a jump at u1 fails the C2 check") {
    auto cut = make_quintic_cutoff(0.5, 1.0);
    const auto smooth = cut.rho;
    cut.rho = [smooth](double u) { return std::abs(u) > 0.5 ? 0.5 * smooth(u) : smooth(u); };
    const auto rep = validate_model(make_ou_drift(), make_constant_sigma(1.0, 1.0), cut);
    const auto* c = rep.find("cutoff.C2");
    REQUIRE(c != nullptr);
    CHECK(c->status == CheckStatus::fail);
    REQUIRE(c->witness.has_value());
    CHECK(*c->witness == doctest::Approx(0.5));
}

TEST_CASE("quadratic drift fails the growth check at x = 10") {
    const auto rep =
        validate_model(square_drift(), make_constant_sigma(1.0, 1.0), make_quintic_cutoff(0.5, 1.0));
    const auto* c = rep.find("drift.linear_growth");
    REQUIRE(c != nullptr);
    CHECK(c->status == CheckStatus::fail);
    CHECK(std::abs(*c->witness) == doctest::Approx(10.0));
}

TEST_CASE("cutoff radius must match the Levy measure") {
    const auto rep = validate_model(make_ou_drift(), make_constant_sigma(1.0, 2.0), make_quintic_cutoff(0.5, 1.0));
    CHECK(rep.find("cutoff.radii")->status == CheckStatus::fail);
}

TEST_CASE("negative tail mass fails") {
    const auto rep = validate_model(make_ou_drift(), make_constant_sigma(1.0, 1.0, {{2.0, -0.1}}),
                                    make_quintic_cutoff(0.5, 1.0));
    CHECK_FALSE(rep.all_passed());
}

TEST_CASE("drift derivatives") {
    const auto ou = make_ou_drift();
    CHECK(ou.eval(0, 0, 2.0, 3.0) == -6.0);
    CHECK(ou.eval(1, 0, 2.0, 3.0) == -2.0);
    CHECK(ou.eval(0, 1, 2.0, 3.0) == -3.0);
    CHECK(ou.eval(1, 1, 2.0, 3.0) == -1.0);
    CHECK(ou.eval(0, 2, 2.0, 3.0) == 0.0);
    CHECK_THROWS_AS(ou.eval(4, 0, 1.0, 0.0), std::invalid_argument);
    const auto tf = make_theta_free_drift(1.5);
    CHECK(tf.eval(0, 1, 0.3, 2.0) == 0.0);
    CHECK(tf.eval(1, 0, 0.3, 2.0) == -1.5);
}

TEST_CASE("factory argument checks") {
    CHECK_THROWS_AS(make_constant_sigma(0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_stable_like(1.0, 2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_stable_like(-1.0, 1.0, 1.0), std::invalid_argument);
}

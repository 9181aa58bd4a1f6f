#include "doctest.h"

#include "levyscore/malliavin.hpp"
#include "levyscore/mcestim.hpp"

#include <cmath>
#include <sstream>

using namespace levyscore;

namespace {

JumpPath path_of(std::vector<JumpEvent> ev, double eps = 0.01) {
    JumpPath jp;
    jp.T = 1.0;
    jp.eps = eps;
    jp.events = std::move(ev);
    return jp;
}

LevyMeasureSpec skew_measure() {
    LevyMeasureSpec m = make_constant_sigma(1.0, 1.0);
    m.name = "exp";
    m.sigma = [](double u) { return std::exp(u); };
    m.sigma_prime = [](double u) { return std::exp(u); };
    m.sigma_second = [](double u) { return std::exp(u); };
    m.symmetric = false;
    return m;
}

}  // namespace

TEST_CASE("delta(1) for a constant density") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    const auto levy = make_constant_sigma(1.0, 1.0);
    // chi(u) = -2u on the core, compensator vanishes by symmetry
    CHECK(delta_one(path_of({{0.3, 0.1}, {0.7, -0.2}}), levy, cut) == doctest::Approx(0.2).epsilon(1e-13));
    CHECK(delta_one(path_of({}), levy, cut) == doctest::Approx(0.0));
    // jumps beyond u0 carry no chi
    CHECK(delta_one(path_of({{0.5, 1.5}}), make_constant_sigma(1.0, 1.0, {{1.5, 0.1}}), cut) ==
          doctest::Approx(0.0));
}

TEST_CASE("delta(1) subtracts the compensator") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    const auto levy = skew_measure();
    const double eps = 0.01;
    auto jp = path_of({}, eps);
    jp.T = 2.0;
    CHECK(delta_one(jp, levy, cut) == doctest::Approx(-2.0 * compensator_chi(levy, cut, eps)).epsilon(1e-13));
}

TEST_CASE("D delta(1)") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    const auto levy = make_constant_sigma(1.0, 1.0);
    // (chi' rho)(u) = -2 u^2
    CHECK(d_delta_one(path_of({{0.5, 0.1}}), levy, cut) == doctest::Approx(-0.02).epsilon(1e-13));

    const Model m{make_ou_drift(), make_stable_like(0.5, 1.0, 1.0), cut};
    const JumpSampler s(m.levy, 0.01);
    for (std::uint64_t i = 0; i < 10; ++i) {
        const auto jp = s.sample(1.0, mix_seed(4, i));
        const PathContext ctx{m, jp, 1.0, 0.0, 0.01};
        const double fd = gateaux_oracle(ctx, 1, GateauxTarget::delta_one);
        const double exact = d_delta_one(jp, m.levy, cut);
        CHECK(std::abs(fd - exact) <= 1e-6 * (1 + std::abs(exact)));
    }
}

TEST_CASE("divergence and xi1") {
    CHECK(divergence(2.0, 0.5, 3.0) == 5.5);
    VariationalBundle b;
    b.Z1 = 1.0;
    b.Y1 = 1.0;
    CHECK(*xi1(b, 1.5) == doctest::Approx(1.5));
    // quotient rule: D(Z1/Y1) = (W1 Y1 - Z1 Y2) / Y1^2
    b.Z1 = 0.6;
    b.Y1 = 0.4;
    b.W1 = 0.2;
    b.Y2 = -0.1;
    const double g = 0.6 / 0.4;
    const double dg = (0.2 * 0.4 + 0.6 * 0.1) / 0.16;
    CHECK(*xi1(b, 0.7) == doctest::Approx(0.7 * g - dg).epsilon(1e-14));
    b.Y1 = 1e-13;
    CHECK_FALSE(xi1(b, 0.7).has_value());
    CHECK_FALSE(xi2(b, 0.7, 0.1).has_value());
}

TEST_CASE("xi2 by hand") {
    VariationalBundle b;
    b.Z1 = 1.0;
    b.Y1 = 1.0;
    // inner divergence is delta1, the outer one gives delta1^2 - D delta1
    CHECK(*xi2(b, 0.5, -0.2) == doctest::Approx(0.45).epsilon(1e-14));
    CHECK(*xi2_nested(b, 0.5, -0.2) == doctest::Approx(0.45).epsilon(1e-14));
}

TEST_CASE("xi2 expansion agrees with nested divergences") {
    VariationalBundle b;
    b.Z1 = -0.37;
    b.Z2 = 0.21;
    b.Y1 = 0.083;
    b.Y2 = -0.019;
    b.Y3 = 0.0071;
    b.W1 = 0.044;
    b.W2 = -0.013;
    b.V1 = 0.031;
    for (double d1 : {-2.0, 0.3, 4.1}) {
        for (double dd1 : {-0.5, 0.0, 0.8}) {
            const double a = *xi2(b, d1, dd1);
            const double n = *xi2_nested(b, d1, dd1);
            CHECK(std::abs(a - n) <= 1e-12 * (1 + std::abs(a)));
        }
    }
}

TEST_CASE("theta-free drift gives zero weights") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    const auto levy = make_stable_like(0.5, 1.0, 1.0);
    const auto drift = make_theta_free_drift(1.0);
    const JumpSampler s(levy, 0.01);
    for (std::uint64_t i = 0; i < 50; ++i) {
        const auto jp = s.sample(1.0, mix_seed(6, i));
        const auto b = propagate_sensitivities(integrate_path(jp, drift, 1.0, 0.0, 0.01), jp, drift, cut);
        const auto w = compute_weights(jp, b, levy, cut);
        if (w.degenerate) continue;
        CHECK(*w.xi1 == 0.0);
        CHECK(*w.xi2 == 0.0);
    }
}

TEST_CASE("paths without small jumps are degenerate") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    const auto levy = make_constant_sigma(1.0, 1.0, {{2.0, 0.5}});
    const auto drift = make_ou_drift();
    const auto jp = path_of({{0.4, 2.0}});
    const auto b = propagate_sensitivities(integrate_path(jp, drift, 1.0, 0.0, 0.01), jp, drift, cut);
    const auto w = compute_weights(jp, b, levy, cut);
    CHECK(w.degenerate);
    CHECK_FALSE(w.xi1.has_value());
    CHECK_FALSE(w.xi2.has_value());
    std::ostringstream os;
    write_weights_csv(os, 3, w);
    CHECK(os.str() == "3,0,0,,,1\n");
}

TEST_CASE("delta(1) has mean zero") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    for (const auto& levy : {make_stable_like(0.5, 1.0, 1.0), skew_measure()}) {
        const JumpSampler s(levy, 0.01);
        std::vector<double> d(100000);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = delta_one(s.sample(1.0, mix_seed(31, i)), levy, cut);
        const auto m = mean_estimate(d);
        INFO(levy.name, " mean ", m.value, " se ", m.std_error);
        CHECK(std::abs(m.value) <= 3.0 * m.std_error);
    }
}

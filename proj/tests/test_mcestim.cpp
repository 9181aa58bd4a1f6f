#include "doctest.h"

#include "levyscore/mcestim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

using namespace levyscore;

namespace {

Simulator stable_sim(DriftSpec drift = make_ou_drift()) {
    return Simulator(Model{std::move(drift), make_stable_like(0.5, 1.0, 1.0), make_quintic_cutoff(0.5, 1.0)}, 0.01);
}

EnsembleConfig small_cfg(std::size_t n, unsigned threads = 1) {
    EnsembleConfig c;
    c.n_paths = n;
    c.x0 = 0.5;
    c.theta = 1.0;
    c.master_seed = 777;
    c.threads = threads;
    return c;
}

}  // namespace

TEST_CASE("pairwise_sum") {
    std::vector<double> v(1000, 0.1);
    CHECK(pairwise_sum(v) == doctest::Approx(100.0).epsilon(1e-14));
    std::vector<double> one{1.0, 1e-16, 1e-16, 1e-16, 1e-16};
    CHECK(pairwise_sum(one) >= 1.0);
    CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("mean_estimate") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto m = mean_estimate(v, 2);
    CHECK(m.value == 2.5);
    // sample variance 5/3
    CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 3.0 / 4.0)).epsilon(1e-14));
    CHECK(m.n_used == 4);
    CHECK(m.n_excluded == 2);
    const std::vector<double> c(10, 0.25);
    CHECK(mean_estimate(c).std_error == 0.0);
}

TEST_CASE("parallel_for covers every index and propagates exceptions") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(500, 4,
                                 [](std::size_t i) {
                                     if (i == 321) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    parallel_for(0, 4, [](std::size_t) { FAIL("called on an empty range"); });
}

TEST_CASE("test function derivatives") {
    for (auto fn : {TestFunction::id, TestFunction::sin, TestFunction::square, TestFunction::bounded_rational}) {
        for (double x : {-1.3, 0.2, 2.5}) {
            const double h = 1e-5;
            const auto v = eval_test_function(fn, x);
            const double d1 = (eval_test_function(fn, x + h).f - eval_test_function(fn, x - h).f) / (2 * h);
            const double d2 = (eval_test_function(fn, x + h).f1 - eval_test_function(fn, x - h).f1) / (2 * h);
            CHECK(v.f1 == doctest::Approx(d1).epsilon(1e-7));
            CHECK(v.f2 == doctest::Approx(d2).epsilon(1e-7));
        }
        CHECK(parse_test_function(to_string(fn)) == fn);
    }
    CHECK_FALSE(parse_test_function("cos").has_value());
}

TEST_CASE("expectation of one") {
    const auto sim = stable_sim();
    const auto ens = sim.ensemble(small_cfg(2000));
    const auto m = mc_expectation(ens, TestFunction::one, WeightKind::none);
    CHECK(m.value == 1.0);
    CHECK(m.std_error == 0.0);
    CHECK(m.n_used + m.n_excluded == 2000);
}

TEST_CASE("weights have mean zero for the stable-like measure") {
    const auto sim = stable_sim();
    const auto ens = sim.ensemble(small_cfg(20000, 0));
    for (auto kind : {WeightKind::xi1, WeightKind::xi2}) {
        const auto m = mc_expectation(ens, TestFunction::one, kind);
        INFO("mean ", m.value, " se ", m.std_error);
        CHECK(std::abs(m.value) <= 3.0 * m.std_error);
    }
}

TEST_CASE("duality on the stable-like measure") {
    const auto sim = stable_sim(make_tanh_drift());
    const auto ens = sim.ensemble(small_cfg(20000, 0));
    for (auto g : {DualityFunctional::one, DualityFunctional::x_T}) {
        const auto r = check_duality(ens, TestFunction::sin, g);
        INFO("z ", r.z);
        CHECK(std::abs(r.z) <= 3.0);
    }
}

TEST_CASE("ensembles are deterministic and thread independent") {
    const auto sim = stable_sim(make_tanh_drift());
    const auto a = sim.ensemble(small_cfg(3000, 1));
    const auto b = sim.ensemble(small_cfg(3000, 4));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.paths[i].bundle.XT == b.paths[i].bundle.XT);
        CHECK(a.paths[i].weights.delta1 == b.paths[i].weights.delta1);
        CHECK(a.paths[i].weights.xi2 == b.paths[i].weights.xi2);
    }
    const auto ma = mc_expectation(a, TestFunction::sin, WeightKind::xi1);
    const auto mb = mc_expectation(b, TestFunction::sin, WeightKind::xi1);
    CHECK(ma.value == mb.value);
    CHECK(ma.std_error == mb.std_error);
    // the same path id draws the same jumps at any theta
    const auto t1 = sim.terminals(small_cfg(50), 0.5);
    const auto t2 = sim.terminals(small_cfg(50), 0.5);
    CHECK(t1 == t2);
    CHECK(sim.jumps(small_cfg(50), 7).events.size() == sim.jumps(small_cfg(10), 7).events.size());
}

TEST_CASE("ensemble configuration is checked") {
    const auto sim = stable_sim();
    auto c = small_cfg(10);
    c.n_paths = 0;
    CHECK_THROWS(sim.ensemble(c));
    c = small_cfg(10);
    c.h = -1.0;
    CHECK_THROWS(sim.ensemble(c));
    c = small_cfg(10);
    c.eps = 0.02;
    CHECK_THROWS(sim.ensemble(c));
}

TEST_CASE("kernel density") {
    std::vector<double> s;
    for (int i = -200; i <= 200; ++i) s.push_back(i / 100.0);
    const auto grid = uniform_grid(-6.0, 6.0, 1201);
    const auto d = kernel_density(s, grid, 0.3);
    double mass = 0.0;
    for (const auto& g : d) mass += g.estimate->value * 0.01;
    CHECK(mass == doctest::Approx(1.0).epsilon(0.02));
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d[i].estimate->value == doctest::Approx(d[d.size() - 1 - i].estimate->value).epsilon(1e-10));
    }
    const std::vector<double> atom(100, 2.0);
    const std::vector<double> y{2.0, 5.0};
    const auto a = kernel_density(atom, y, 0.5);
    CHECK(a[0].estimate->value == doctest::Approx(1.0 / (0.5 * std::sqrt(2 * std::numbers::pi))).epsilon(1e-12));
    CHECK(a[1].estimate->value < 1e-4);
    CHECK_THROWS(kernel_density(atom, y, 0.0));
}

TEST_CASE("Nadaraya-Watson") {
    const std::vector<double> s(50, 1.0);
    std::vector<double> v;
    for (int i = 0; i < 50; ++i) v.push_back(i);
    // at y = 0.5 the kernel mass is 50 exp(-3.125) < 5
    const std::vector<double> y{1.0, 1.1, 0.5, 40.0};
    const auto r = nadaraya_watson(s, v, y, 0.2);
    REQUIRE(r[0].estimate.has_value());
    REQUIRE(r[1].estimate.has_value());
    CHECK(r[0].estimate->value == doctest::Approx(24.5).epsilon(1e-13));
    CHECK(r[1].estimate->value == doctest::Approx(24.5).epsilon(1e-12));
    CHECK(r[0].n_eff == doctest::Approx(50.0));
    CHECK_FALSE(r[2].estimate.has_value());
    CHECK_FALSE(r[3].estimate.has_value());
}

TEST_CASE("silverman bandwidth") {
    const std::vector<double> c(10, 3.0);
    CHECK(silverman_bandwidth(c) == 1.0);
    const std::vector<double> v{-1.0, 1.0};
    CHECK(silverman_bandwidth(v) == doctest::Approx(1.06 * std::sqrt(2.0) * std::pow(2.0, -0.2)));
}

TEST_CASE("theta-free drift") {
    const auto sim = stable_sim(make_theta_free_drift(1.0));
    const auto cfg = small_cfg(4000, 0);
    const auto ens = sim.ensemble(cfg);
    const auto grid = uniform_grid(-1.0, 1.0, 5);
    for (const auto& g : kernel_g(ens, grid, 1, {0.3})) {
        if (g.estimate) CHECK(g.estimate->value == 0.0);
    }
    const auto data = prepare_identity_data(sim, cfg);
    const auto r = check_derivative_identity(data, 1, TestFunction::sin);
    CHECK(r.right == 0.0);
    CHECK(r.left == 0.0);
    const auto r2 = check_derivative_identity(data, 2, TestFunction::one);
    CHECK(r2.left == 0.0);
    CHECK(r2.right == 0.0);
}

TEST_CASE("order-2 identity with f = one") {
    const auto sim = stable_sim(make_tanh_drift());
    const auto data = prepare_identity_data(sim, small_cfg(20000, 0));
    const auto r = check_derivative_identity(data, 2, TestFunction::one);
    CHECK(r.left == 0.0);
    INFO("right ", r.right, " se ", r.right_se);
    CHECK(std::abs(r.right) <= 3.0 * r.right_se);
}

TEST_CASE("floored relative error") {
    CHECK(floored_relative_error(1.1, 1.0, 2.0) == doctest::Approx(0.1));
    // reference below the floor: the denominator is 0.1 * scale
    CHECK(floored_relative_error(0.05, 0.0, 2.0) == doctest::Approx(0.25));
}

TEST_CASE("uniform grid") {
    const auto g = uniform_grid(-1.0, 1.0, 5);
    REQUIRE(g.size() == 5);
    CHECK(g.front() == -1.0);
    CHECK(g[2] == 0.0);
    CHECK(g.back() == 1.0);
}

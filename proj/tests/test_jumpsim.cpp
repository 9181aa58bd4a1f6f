#include "doctest.h"

#include "levyscore/jumpsim.hpp"
#include "levyscore/mcestim.hpp"

#include <cmath>
#include <sstream>

using namespace levyscore;

TEST_CASE("atom-only measure") {
    // smooth part has no mass beyond eps >= u0
    const auto levy = make_constant_sigma(1.0, 0.05, {{2.0, 0.5}});
    const JumpSampler s(levy, 0.1);
    CHECK(s.intensity() == doctest::Approx(0.5));
    std::vector<double> counts;
    for (std::uint64_t i = 0; i < 20000; ++i) {
        const auto jp = s.sample(2.0, mix_seed(99, i));
        for (const auto& ev : jp.events) CHECK(ev.size == 2.0);
        counts.push_back(static_cast<double>(jp.events.size()));
    }
    const auto m = mean_estimate(counts);
    CHECK(std::abs(m.value - 1.0) <= 3.0 * m.std_error);
    double var = 0.0;
    for (double c : counts) var += (c - m.value) * (c - m.value);
    var /= static_cast<double>(counts.size() - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("uniform density intensity and compensator drift") {
    const JumpSampler s(make_constant_sigma(1.0, 1.0), 0.5);
    CHECK(s.intensity() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s.comp_drift() == doctest::Approx(0.0).epsilon(1e-12));
    const JumpSampler small(make_constant_sigma(1.0, 1.0), 0.01);
    CHECK(small.intensity() == doctest::Approx(1.98).epsilon(1e-10));
}

TEST_CASE("asymmetric atoms give a compensator drift") {
    // the smooth part is symmetric; the atom at u = 1 sits on the compensation boundary
    const JumpSampler s(make_stable_like(0.5, 1.0, 0.8, {{1.0, 0.3}}), 0.01);
    CHECK(s.comp_drift() == doctest::Approx(-0.3).epsilon(1e-10));
}

TEST_CASE("sampling is deterministic in the seed") {
    const JumpSampler s(make_stable_like(0.5, 1.0, 1.0), 0.01);
    const auto a = s.sample(1.0, 42);
    const auto b = s.sample(1.0, 42);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        CHECK(a.events[i].time == b.events[i].time);
        CHECK(a.events[i].size == b.events[i].size);
    }
    const auto c = s.sample(1.0, 43);
    CHECK((c.events.size() != a.events.size() || c.events.front().size != a.events.front().size));
    const auto free_fn = sample_jumps(make_stable_like(0.5, 1.0, 1.0), 1.0, 0.01, 42);
    REQUIRE(free_fn.events.size() == a.events.size());
    CHECK(free_fn.events.back().size == a.events.back().size);
}

TEST_CASE("jump times are ordered and sizes respect eps") {
    const double eps = 0.02;
    const JumpSampler s(make_stable_like(0.5, 1.2, 1.0, {{-1.5, 0.2}}), eps);
    for (std::uint64_t i = 0; i < 200; ++i) {
        const auto jp = s.sample(1.5, mix_seed(5, i));
        double last = 0.0;
        for (const auto& ev : jp.events) {
            CHECK(ev.time > 0.0);
            CHECK(ev.time <= 1.5);
            CHECK(ev.time >= last);
            CHECK(std::abs(ev.size) >= eps);
            last = ev.time;
        }
    }
}

TEST_CASE("mean jump count equals lambda T") {
    const JumpSampler s(make_stable_like(0.5, 1.0, 1.0), 0.05);
    std::vector<double> counts;
    for (std::uint64_t i = 0; i < 10000; ++i) counts.push_back(double(s.sample(0.7, mix_seed(3, i)).events.size()));
    const auto m = mean_estimate(counts);
    CHECK(std::abs(m.value - s.intensity() * 0.7) <= 3.0 * m.std_error);
}

TEST_CASE("sampled sizes follow the density") {
    // sigma = 1 on [-1,1], eps = 0.5: sizes uniform on 0.5 <= |u| <= 1
    const JumpSampler s(make_constant_sigma(1.0, 1.0), 0.5);
    std::vector<double> abs_sizes;
    for (std::uint64_t i = 0; i < 5000; ++i) {
        for (const auto& ev : s.sample(1.0, mix_seed(8, i)).events) abs_sizes.push_back(std::abs(ev.size));
    }
    const auto m = mean_estimate(abs_sizes);
    CHECK(std::abs(m.value - 0.75) <= 3.0 * m.std_error);
}

TEST_CASE("integrate_path: zero drift is a jump sum") {
    JumpPath jp;
    jp.T = 1.0;
    jp.events = {{0.3, 0.1}, {0.7, -0.2}};
    const auto sk = integrate_path(jp, make_theta_free_drift(0.0), 1.0, 1.0, 0.01);
    CHECK(sk.terminal() == doctest::Approx(0.9).epsilon(1e-14));
    REQUIRE(sk.jump_index.size() == 2);
    CHECK(sk.t[sk.jump_index[0]] == doctest::Approx(0.3));
    CHECK(sk.x_left[sk.jump_index[1]] == doctest::Approx(1.1));
    CHECK(sk.x[sk.jump_index[1]] == doctest::Approx(0.9));
    for (std::size_t i = 1; i < sk.t.size(); ++i) CHECK(sk.t[i] - sk.t[i - 1] <= 0.01 + 1e-15);
}

TEST_CASE("integrate_path: OU without jumps") {
    JumpPath jp;
    jp.T = 1.0;
    const auto coarse = integrate_path(jp, make_ou_drift(), 1.0, 1.0, 1e-2);
    const auto fine = integrate_path(jp, make_ou_drift(), 1.0, 1.0, 1e-4);
    CHECK(std::abs(fine.terminal() - std::exp(-1.0)) < 1e-3);
    CHECK(std::abs(coarse.terminal() - std::exp(-1.0)) > std::abs(fine.terminal() - std::exp(-1.0)));
    CHECK(coarse.terminal() == doctest::Approx(std::pow(0.99, 100)).epsilon(1e-12));
}

TEST_CASE("integrate_path: theta = 0 adds the compensator drift") {
    const JumpSampler s(make_stable_like(0.5, 1.0, 0.8, {{1.0, 0.3}}), 0.05);
    const auto jp = s.sample(2.0, 17);
    double sum = 0.0;
    for (const auto& ev : jp.events) sum += ev.size;
    const auto sk = integrate_path(jp, make_ou_drift(), 0.0, 0.5, 0.01);
    CHECK(sk.terminal() == doctest::Approx(0.5 + sum + jp.comp_drift * 2.0).epsilon(1e-12));
}

TEST_CASE("integrate_path rejects bad steps") {
    JumpPath jp;
    CHECK_THROWS(integrate_path(jp, make_ou_drift(), 1.0, 1.0, 0.0));
}

TEST_CASE("compensator_chi") {
    const auto cut = make_quintic_cutoff(0.5, 1.0);
    // symmetric measures: the two boundary terms cancel
    CHECK(compensator_chi(make_constant_sigma(1.0, 1.0), cut, 0.01) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(compensator_chi(make_stable_like(0.5, 1.3, 1.0), cut, 0.01) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(compensator_chi(make_constant_sigma(1.0, 1.0), cut, 1.0) == 0.0);
    CHECK(compensator_chi(make_constant_sigma(1.0, 1.0), cut, 2.0) == 0.0);

    // asymmetric density: antiderivative vs quadrature
    LevyMeasureSpec skew = make_constant_sigma(1.0, 1.0);
    skew.sigma = [](double u) { return std::exp(u); };
    skew.sigma_prime = [](double u) { return std::exp(u); };
    skew.sigma_second = [](double u) { return std::exp(u); };
    skew.symmetric = false;
    const double eps = 0.01;
    const double exact = std::exp(eps) * eps * eps - std::exp(-eps) * eps * eps;
    CHECK(compensator_chi(skew, cut, eps) == doctest::Approx(exact).epsilon(1e-12));
    CHECK(compensator_chi_quadrature(skew, cut, eps) == doctest::Approx(exact).epsilon(1e-7));
}

TEST_CASE("mix_seed spreads indices") {
    CHECK(mix_seed(1, 0) != mix_seed(1, 1));
    CHECK(mix_seed(1, 0) != mix_seed(2, 0));
    CHECK(mix_seed(7, 9) == mix_seed(7, 9));
}

TEST_CASE("path csv") {
    JumpPath jp;
    jp.T = 0.05;
    jp.events = {{0.02, 0.3}};
    const auto sk = integrate_path(jp, make_ou_drift(), 1.0, 0.0, 0.01);
    std::ostringstream os;
    write_path_csv_header(os);
    write_path_csv(os, 4, sk, jp);
    const std::string s = os.str();
    CHECK(s.rfind("path_id,t,x,is_jump,u\n", 0) == 0);
    CHECK(s.find("4,0.02") != std::string::npos);
}

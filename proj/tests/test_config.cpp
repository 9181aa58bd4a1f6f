#include "doctest.h"

#include "levyscore/config.hpp"

#include <cmath>
#include <sstream>

using namespace levyscore;

namespace {

ConfigTable parse(const std::string& text) {
    std::istringstream is(text);
    return ConfigTable::parse(is);
}

std::string reason(const std::string& text) {
    try {
        load_run_config(parse(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

const char* kMinimal = R"(
model.drift.name = "ou"
model.levy.name = "constant"
model.levy.s0 = 1.0
model.levy.u0 = 1.0
model.cutoff.u1 = 0.5
)";

}  // namespace

TEST_CASE("value types") {
    const auto t = parse(R"(
# comment line
a.int = 42
a.real = 2.5e-3   # trailing comment
a.neg = -7
a.flag = true
a.name = "two words # not a comment"
)");
    CHECK(t.get_int("a.int") == 42);
    CHECK(t.get_real("a.int") == 42.0);
    CHECK(t.get_real("a.real") == 2.5e-3);
    CHECK(t.get_int("a.neg") == -7);
    CHECK(t.get_bool("a.flag", false));
    CHECK(t.get_string("a.name") == "two words # not a comment");
    CHECK(t.get_real("missing", 1.5) == 1.5);
    CHECK_FALSE(t.get_optional_real("missing").has_value());
    CHECK_THROWS_WITH_AS(t.get_real("missing"), "missing missing", ConfigError);
    CHECK_THROWS_AS(t.get_int("a.real"), ConfigError);
    CHECK_THROWS_AS(t.get_string("a.int"), ConfigError);
    CHECK_THROWS_AS(t.get_real("a.flag"), ConfigError);
}

TEST_CASE("syntax errors") {
    CHECK_THROWS_WITH_AS(parse("a = 1\njunk\n"), "line 2: expected key = value", ConfigError);
    CHECK_THROWS_WITH_AS(parse("a = 1\na = 2\n"), "a duplicated at line 2", ConfigError);
    CHECK_THROWS_AS(parse("a = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse("a = \"open\n"), ConfigError);
    CHECK_THROWS_AS(ConfigTable::parse_file("/nonexistent/x.cfg"), ConfigError);
}

TEST_CASE("unused keys") {
    const auto t = parse("a = 1\nb = 2\n");
    t.get_int("a");
    CHECK(t.unused_keys() == std::vector<std::string>{"b"});
}

TEST_CASE("minimal config gets defaults") {
    const auto rc = load_run_config(parse(kMinimal));
    CHECK(rc.model.drift.name == make_ou_drift().name);
    CHECK(rc.model.levy.u0 == 1.0);
    CHECK(rc.model.cutoff.u1 == 0.5);
    CHECK(rc.sim.eps == 0.01);
    CHECK(rc.sim.n_paths == 10000);
    CHECK(rc.sim.theta == 1.0);
    CHECK(rc.grid.points == 61);
    CHECK(rc.likelihood.n_paths == 2000);
    CHECK(rc.theta0 == 0.5);
    CHECK(rc.z_threshold == 3.0);
    CHECK_FALSE(rc.bandwidth.has_value());
    CHECK_FALSE(rc.data_path.has_value());
    CHECK(rc.table.has("sim.h"));
    CHECK(rc.table.has("fit.max_iter"));
}

TEST_CASE("configuration errors name the key") {
    CHECK(reason("model.drift.name = \"ou\"\nmodel.levy.name = \"constant\"\n") == "model.levy.u0 missing");
    // model parameters have no defaults
    CHECK(reason("model.drift.name = \"ou\"\nmodel.levy.name = \"constant\"\nmodel.levy.u0 = 1\n") ==
          "model.levy.s0 missing");
    CHECK(reason(std::string(kMinimal) + "sim.n_paths = 0\n").find("sim.n_paths") == 0);
    CHECK(reason(std::string(kMinimal) + "sim.eps = -1\n").find("sim.eps") == 0);
    CHECK(reason(std::string(kMinimal) + "sim.theta = 9\n") ==
          "sim.theta outside [model.drift.theta_min, model.drift.theta_max]");
    CHECK(reason("model.drift.name = \"cubic\"\nmodel.levy.name = \"constant\"\nmodel.levy.u0 = 1\n")
              .find("model.drift.name 'cubic' unknown") == 0);
    CHECK(reason("model.drift.name = \"ou\"\nmodel.levy.name = \"gamma\"\nmodel.levy.u0 = 1\n")
              .find("model.levy.name 'gamma' unknown") == 0);
    CHECK(reason(std::string(kMinimal) + "model.levy.tail = \"2.0-0.1\"\n").find("model.levy.tail") == 0);
    // factory range errors come back as ConfigError
    CHECK_FALSE(reason("model.drift.name = \"ou\"\nmodel.levy.name = \"stable-like\"\nmodel.levy.u0 = 1\n"
                       "model.levy.c = 1\nmodel.levy.alpha = 2.5\nmodel.cutoff.u1 = 0.5\n")
                    .empty());
    CHECK_FALSE(reason(std::string(kMinimal) + "model.cutoff.u1 = 1.5\n").empty());
}

TEST_CASE("component names and tail atoms") {
    const auto rc = load_run_config(parse(R"(
model.drift.name = "theta_free"
model.drift.k = 2.0
model.levy.name = "stable-like"
model.levy.c = 0.5
model.levy.alpha = 1.2
model.levy.u0 = 1.0
model.levy.tail = "2.0:0.1, -1.5:0.25"
model.cutoff.u1 = 0.5
)"));
    CHECK(rc.model.drift.eval(1, 0, 0.3, 1.0) == -2.0);
    CHECK(rc.model.drift.eval(0, 1, 0.3, 1.0) == 0.0);
    REQUIRE(rc.model.levy.tail.size() == 2);
    CHECK(rc.model.levy.tail[1].u == -1.5);
    CHECK(rc.model.levy.tail[1].mass == 0.25);
    CHECK(rc.model.levy.sigma(0.5) == doctest::Approx(0.5 * std::pow(0.5, -2.2)));
}

TEST_CASE("effective config roundtrip") {
    const auto rc = load_run_config(parse(std::string(kMinimal) + "sim.h = 0.005\nestimator.bandwidth = 0.3\n"));
    std::ostringstream os;
    rc.table.write(os);
    const auto again = load_run_config(parse(os.str()));
    CHECK(again.table.values() == rc.table.values());
    CHECK(again.sim.h == 0.005);
    CHECK(*again.bandwidth == 0.3);
}

TEST_CASE("value formatting") {
    CHECK(format_config_value(1.0) == "1.0");
    CHECK(format_config_value(0.1) == "0.1");
    CHECK(format_config_value(std::int64_t{7}) == "7");
    CHECK(format_config_value(true) == "true");
    CHECK(format_config_value(std::string("ou")) == "\"ou\"");
    CHECK(format_config_value(1e-300) == "1e-300");
}

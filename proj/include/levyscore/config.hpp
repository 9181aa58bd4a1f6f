#pragma once

#include "levyscore/likefit.hpp"
#include "levyscore/mcestim.hpp"
#include "levyscore/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace levyscore {

/// Bad or missing configuration. what() is a one-line reason such as
/// "model.levy.u0 missing".
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using ConfigValue = std::variant<bool, std::int64_t, double, std::string>;

/// Flat `dotted.key = value` table. Values are booleans (true/false),
/// integers, reals or double-quoted strings; `#` starts a comment.
class ConfigTable {
public:
    static ConfigTable parse(std::istream& is);
    static ConfigTable parse_file(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, ConfigValue v) { values_[key] = std::move(v); }

    double get_real(const std::string& key) const;
    double get_real(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    std::optional<double> get_optional_real(const std::string& key) const;

    /// Keys that were never read; typos show up here.
    std::vector<std::string> unused_keys() const;
    const std::map<std::string, ConfigValue>& values() const { return values_; }

    void write(std::ostream& os) const;

private:
    const ConfigValue& require(const std::string& key) const;

    std::map<std::string, ConfigValue> values_;
    mutable std::map<std::string, bool> read_;
};

struct GridSpec {
    double y_min = -3.0;
    double y_max = 3.0;
    std::size_t points = 61;
};

struct SyntheticDataSpec {
    double theta = 1.0;
    double x0 = 0.0;
    std::size_t n = 500;
    double dt = 0.1;
    std::uint64_t seed = 1;
};

struct RunConfig {
    ConfigTable table;  ///< effective table, defaults filled in

    Model model;
    EnsembleConfig sim;
    std::size_t paths_to_write = 10;

    std::optional<double> bandwidth;
    GridSpec grid;
    double p_min = 0.05;

    /// Observations come from `data.path` when set, otherwise from the
    /// data.synthetic.* keys.
    std::optional<std::string> data_path;
    SyntheticDataSpec synthetic;
    LikelihoodConfig likelihood;
    double theta0 = 0.5;
    FitOptions fit;

    std::string output_dir = "out";
    double z_threshold = 3.0;
};

/// Resolves component names, builds the model and fills defaults. Range
/// errors from the model factories are reported as ConfigError.
RunConfig load_run_config(ConfigTable table);
RunConfig load_run_config_file(const std::string& path);

/// Writes `key = value` lines back in parseable form.
std::string format_config_value(const ConfigValue& v);

}  // namespace levyscore

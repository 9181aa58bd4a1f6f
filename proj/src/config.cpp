#include "levyscore/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace levyscore {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
    if (k.empty() || k.front() == '.' || k.back() == '.') return false;
    for (char c : k) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                        c == '-' || c == '.';
        if (!ok) return false;
    }
    return k.find("..") == std::string::npos;
}

// Strips a trailing comment outside of quotes.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::optional<ConfigValue> parse_value(const std::string& text) {
    if (text.empty()) return std::nullopt;
    if (text == "true") return ConfigValue{true};
    if (text == "false") return ConfigValue{false};
    if (text.front() == '"') {
        if (text.size() < 2 || text.back() != '"') return std::nullopt;
        const std::string inner = text.substr(1, text.size() - 2);
        if (inner.find('"') != std::string::npos) return std::nullopt;
        return ConfigValue{inner};
    }
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (text.find_first_of(".eE") == std::string::npos || text == "inf" || text == "nan") {
        std::int64_t i = 0;
        const auto r = std::from_chars(first, last, i);
        if (r.ec == std::errc{} && r.ptr == last) return ConfigValue{i};
    }
    double d = 0.0;
    const auto r = std::from_chars(first, last, d);
    if (r.ec == std::errc{} && r.ptr == last && std::isfinite(d)) return ConfigValue{d};
    return std::nullopt;
}

const char* type_name(const ConfigValue& v) {
    switch (v.index()) {
        case 0: return "boolean";
        case 1: return "integer";
        case 2: return "real";
        default: return "string";
    }
}

}  // namespace

std::string format_config_value(const ConfigValue& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
    if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
    if (const auto* d = std::get_if<double>(&v)) {
        char buf[40];
        const auto r = std::to_chars(buf, buf + sizeof buf, *d);
        std::string s(buf, r.ptr);
        if (s.find_first_of(".eE") == std::string::npos) s += ".0";
        return s;
    }
    return '"' + std::get<std::string>(v) + '"';
}

ConfigTable ConfigTable::parse(std::istream& is) {
    ConfigTable t;
    std::string raw;
    int line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "line " + std::to_string(line_no);
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string text = trim(line.substr(eq + 1));
        if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + key + "'");
        if (t.has(key)) throw ConfigError(key + " duplicated at " + where);
        const auto v = parse_value(text);
        if (!v) throw ConfigError(key + " has unparseable value '" + text + "'");
        t.values_[key] = *v;
    }
    return t;
}

ConfigTable ConfigTable::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file '" + path + "' not readable");
    return parse(in);
}

const ConfigValue& ConfigTable::require(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key + " missing");
    read_[key] = true;
    return it->second;
}

double ConfigTable::get_real(const std::string& key) const {
    const auto& v = require(key);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    throw ConfigError(key + " must be a number, got " + type_name(v));
}

double ConfigTable::get_real(const std::string& key, double fallback) const {
    return has(key) ? get_real(key) : fallback;
}

std::int64_t ConfigTable::get_int(const std::string& key) const {
    const auto& v = require(key);
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    throw ConfigError(key + " must be an integer, got " + type_name(v));
}

std::int64_t ConfigTable::get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

bool ConfigTable::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = require(key);
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    throw ConfigError(key + " must be true or false, got " + type_name(v));
}

std::string ConfigTable::get_string(const std::string& key) const {
    const auto& v = require(key);
    if (const auto* s = std::get_if<std::string>(&v)) return *s;
    throw ConfigError(key + " must be a quoted string, got " + type_name(v));
}

std::string ConfigTable::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

std::optional<double> ConfigTable::get_optional_real(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return get_real(key);
}

std::vector<std::string> ConfigTable::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
        if (!read_.count(k)) out.push_back(k);
    }
    return out;
}

void ConfigTable::write(std::ostream& os) const {
    for (const auto& [k, v] : values_) os << k << " = " << format_config_value(v) << '\n';
}

namespace {

// Reads a key, recording the default in the table when absent so that the
// effective table reproduces the run.
struct Reader {
    ConfigTable& t;

    double real(const std::string& key) { return t.get_real(key); }
    double real(const std::string& key, double fallback) {
        if (!t.has(key)) t.set(key, fallback);
        return t.get_real(key);
    }
    std::int64_t integer(const std::string& key, std::int64_t fallback) {
        if (!t.has(key)) t.set(key, fallback);
        return t.get_int(key);
    }
    std::size_t count(const std::string& key, std::int64_t fallback, std::int64_t min = 1) {
        const auto v = integer(key, fallback);
        if (v < min) throw ConfigError(key + " must be at least " + std::to_string(min));
        return static_cast<std::size_t>(v);
    }
    std::uint64_t seed(const std::string& key, std::int64_t fallback) {
        const auto v = integer(key, fallback);
        if (v < 0) throw ConfigError(key + " must be non-negative");
        return static_cast<std::uint64_t>(v);
    }
    bool boolean(const std::string& key, bool fallback) {
        if (!t.has(key)) t.set(key, fallback);
        return t.get_bool(key, fallback);
    }
    std::string string(const std::string& key) { return t.get_string(key); }
    std::string string(const std::string& key, const std::string& fallback) {
        if (!t.has(key)) t.set(key, fallback);
        return t.get_string(key);
    }
    double positive(const std::string& key, double fallback) {
        const double v = real(key, fallback);
        if (!(v > 0.0)) throw ConfigError(key + " must be positive");
        return v;
    }
};

std::string normalize_name(std::string s) {
    for (auto& c : s) {
        if (c == '_') c = '-';
    }
    return s;
}

// "u:mass, u:mass, ..."
std::vector<TailAtom> parse_tail(const std::string& key, const std::string& text) {
    std::vector<TailAtom> atoms;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto colon = item.find(':');
        const auto u = colon == std::string::npos ? std::nullopt : parse_value(trim(item.substr(0, colon)));
        const auto m = colon == std::string::npos ? std::nullopt : parse_value(trim(item.substr(colon + 1)));
        auto num = [](const std::optional<ConfigValue>& v) -> std::optional<double> {
            if (!v) return std::nullopt;
            if (const auto* d = std::get_if<double>(&*v)) return *d;
            if (const auto* i = std::get_if<std::int64_t>(&*v)) return static_cast<double>(*i);
            return std::nullopt;
        };
        const auto un = num(u);
        const auto mn = num(m);
        if (!un || !mn) throw ConfigError(key + " entry '" + item + "' is not of the form u:mass");
        atoms.push_back({*un, *mn});
    }
    return atoms;
}

Model build_model(Reader& r) {
    Model m;
    const Interval domain{r.real("model.drift.theta_min", -5.0), r.real("model.drift.theta_max", 5.0)};
    if (!(domain.lo < domain.hi)) throw ConfigError("model.drift.theta_min must be below model.drift.theta_max");
    const std::string drift = normalize_name(r.string("model.drift.name"));
    if (drift == "ou") {
        m.drift = make_ou_drift(domain);
    } else if (drift == "tanh") {
        m.drift = make_tanh_drift(domain);
    } else if (drift == "theta-free") {
        m.drift = make_theta_free_drift(r.real("model.drift.k"));
        m.drift.theta_domain = domain;
    } else {
        throw ConfigError("model.drift.name '" + drift + "' unknown (ou, tanh, theta-free)");
    }

    const std::string levy = normalize_name(r.string("model.levy.name"));
    const double u0 = r.real("model.levy.u0");
    const auto tail = parse_tail("model.levy.tail", r.string("model.levy.tail", ""));
    if (levy == "constant") {
        const double s0 = r.real("model.levy.s0");
        m.levy = make_constant_sigma(s0, u0, tail);
    } else if (levy == "stable-like") {
        const double c = r.real("model.levy.c");
        const double alpha = r.real("model.levy.alpha");
        m.levy = make_stable_like(c, alpha, u0, tail);
    } else {
        throw ConfigError("model.levy.name '" + levy + "' unknown (constant, stable-like)");
    }
    m.cutoff = make_quintic_cutoff(r.real("model.cutoff.u1"), u0);
    return m;
}

}  // namespace

RunConfig load_run_config(ConfigTable table) {
    RunConfig rc;
    Reader r{table};
    try {
        rc.model = build_model(r);

        auto& s = rc.sim;
        s.T = r.positive("sim.T", 1.0);
        s.eps = r.positive("sim.eps", 0.01);
        s.h = r.positive("sim.h", 0.01);
        s.n_paths = r.count("sim.n_paths", 10000);
        s.master_seed = r.seed("sim.master_seed", 1);
        s.x0 = r.real("sim.x0", 1.0);
        s.theta = r.real("sim.theta", 1.0);
        s.fd_step_theta = r.positive("estimator.fd_step_theta", 1e-2);
        s.richardson = r.boolean("estimator.richardson", true);
        s.threads = static_cast<unsigned>(r.count("run.threads", 0, 0));
        rc.paths_to_write = r.count("sim.paths_to_write", 10, 0);
        if (!rc.model.drift.theta_domain.contains(s.theta)) {
            throw ConfigError("sim.theta outside [model.drift.theta_min, model.drift.theta_max]");
        }
        validate_config(s);

        rc.bandwidth = table.get_optional_real("estimator.bandwidth");
        if (rc.bandwidth && !(*rc.bandwidth > 0.0)) throw ConfigError("estimator.bandwidth must be positive");
        rc.grid.y_min = r.real("estimator.y_min", -3.0);
        rc.grid.y_max = r.real("estimator.y_max", 3.0);
        rc.grid.points = r.count("estimator.y_points", 61, 2);
        if (!(rc.grid.y_min < rc.grid.y_max)) throw ConfigError("estimator.y_min must be below estimator.y_max");
        rc.p_min = r.real("estimator.p_min", 0.05);

        if (table.has("data.path")) rc.data_path = r.string("data.path");
        rc.synthetic.theta = r.real("data.synthetic.theta", 1.0);
        rc.synthetic.x0 = r.real("data.synthetic.x0", 0.0);
        rc.synthetic.n = r.count("data.synthetic.n", 500);
        rc.synthetic.dt = r.positive("data.synthetic.dt", 0.1);
        rc.synthetic.seed = r.seed("data.synthetic.seed", 1);

        auto& lc = rc.likelihood;
        lc.n_paths = r.count("fit.n_paths", 2000);
        lc.eps = s.eps;
        lc.h = s.h;
        lc.master_seed = s.master_seed;
        lc.bandwidth = rc.bandwidth;
        lc.max_drop_fraction = r.real("fit.max_drop_fraction", 0.2);
        lc.threads = s.threads;
        rc.theta0 = r.real("fit.theta0", 0.5);
        rc.fit.tol = r.positive("fit.tol", 1e-6);
        rc.fit.max_iter = static_cast<int>(r.count("fit.max_iter", 30, 0));
        rc.fit.damping = r.positive("fit.damping", 1.0);
        rc.fit.gradient_step = r.positive("fit.gradient_step", 0.1);

        rc.output_dir = r.string("output.dir", "out");
        rc.z_threshold = r.positive("gate.z_threshold", 3.0);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::domain_error& e) {
        throw ConfigError(e.what());
    }
    rc.table = std::move(table);
    return rc;
}

RunConfig load_run_config_file(const std::string& path) { return load_run_config(ConfigTable::parse_file(path)); }

}  // namespace levyscore

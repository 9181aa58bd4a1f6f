#include "levyscore/config.hpp"
#include "levyscore/likefit.hpp"
#include "levyscore/malliavin.hpp"
#include "levyscore/mcestim.hpp"
#include "levyscore/varsens.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace levyscore;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kNumerical = 3, kGate = 4 };

struct Overrides {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::int64_t> seed;
    std::optional<std::int64_t> n_paths;
    std::optional<double> theta;
    std::optional<unsigned> threads;
    bool gate = false;
    bool consistency = false;
};

class Run {
public:
    Run(std::string command, const Overrides& ov) : command_(std::move(command)) {
        ConfigTable table = ConfigTable::parse_file(ov.config_path);
        if (ov.seed) table.set("sim.master_seed", *ov.seed);
        if (ov.n_paths) table.set("sim.n_paths", *ov.n_paths);
        if (ov.theta) table.set("sim.theta", *ov.theta);
        if (ov.threads) table.set("run.threads", static_cast<std::int64_t>(*ov.threads));
        if (ov.out_dir) table.set("output.dir", *ov.out_dir);
        cfg_ = load_run_config(std::move(table));
        for (const auto& k : cfg_.table.unused_keys()) {
            std::cerr << "warning=config reason=\"" << k << " is not a recognised key\"\n";
        }
        dir_ = fs::path(cfg_.output_dir) / command_;
        fs::create_directories(dir_);
        start_ = std::chrono::steady_clock::now();
    }

    const RunConfig& cfg() const { return cfg_; }

    std::ofstream open(const std::string& name) {
        std::ofstream os(dir_ / name);
        if (!os) throw std::runtime_error("cannot write " + (dir_ / name).string());
        artifacts_.push_back(name);
        return os;
    }

    void write_json(const std::string& name, const json& j) {
        auto os = open(name);
        os << j.dump(2) << '\n';
    }

    void finish(int exit_code, const std::string& status) {
        {
            auto os = open("config.effective");
            cfg_.table.write(os);
        }
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json config = json::object();
        for (const auto& [k, v] : cfg_.table.values()) {
            std::visit([&](const auto& x) { config[k] = x; }, v);
        }
        const unsigned threads = cfg_.sim.threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                                       : cfg_.sim.threads;
        json m;
        m["command"] = command_;
        m["status"] = status;
        m["exit_code"] = exit_code;
        m["version"] = kVersion;
        m["compiler"] = __VERSION__;
        m["seeds"] = {{"master_seed", cfg_.sim.master_seed}, {"synthetic_seed", cfg_.synthetic.seed}};
        m["threads"] = threads;
        m["wall_time_s"] = wall;
        m["artifacts"] = artifacts_;
        m["config"] = config;
        std::ofstream os(dir_ / "manifest.json");
        if (!os) throw std::runtime_error("cannot write manifest");
        os << m.dump(2) << '\n';
    }

private:
    std::string command_;
    RunConfig cfg_;
    fs::path dir_;
    std::vector<std::string> artifacts_;
    std::chrono::steady_clock::time_point start_;
};

json estimate_json(const McEstimate& e) {
    return {{"value", e.value}, {"std_error", e.std_error}, {"n_used", e.n_used}, {"n_excluded", e.n_excluded}};
}

int cmd_validate(Run& run) {
    const auto rep = validate_model(run.cfg().model);
    json checks = json::array();
    for (const auto& c : rep.checks) {
        json j{{"name", c.name}, {"status", to_string(c.status)}, {"detail", c.detail}};
        j["witness"] = c.witness ? json(*c.witness) : json(nullptr);
        checks.push_back(j);
    }
    run.write_json("report.json", {{"all_passed", rep.all_passed()}, {"checks", checks}});
    if (!rep.all_passed()) {
        for (const auto& c : rep.checks) {
            if (c.status == CheckStatus::fail) {
                std::cerr << "error=config reason=\"" << c.name << " failed: " << c.detail << "\"\n";
                break;
            }
        }
        run.finish(kConfig, "hypothesis check failed");
        return kConfig;
    }
    run.finish(kOk, "ok");
    return kOk;
}

int cmd_simulate(Run& run) {
    const auto& cfg = run.cfg();
    const Simulator sim(cfg.model, cfg.sim.eps);
    const auto& s = cfg.sim;
    std::vector<double> xt(s.n_paths);
    std::vector<std::size_t> n_jumps(s.n_paths);
    parallel_for(s.n_paths, s.threads, [&](std::size_t i) {
        const auto jp = sim.jumps(s, i);
        xt[i] = integrate_path(jp, cfg.model.drift, s.theta, s.x0, s.h).terminal();
        n_jumps[i] = jp.events.size();
    });
    {
        auto os = run.open("terminals.csv");
        os.precision(17);
        os << "path_id,x_T,n_jumps\n";
        for (std::size_t i = 0; i < s.n_paths; ++i) os << i << ',' << xt[i] << ',' << n_jumps[i] << '\n';
    }
    {
        auto os = run.open("paths.csv");
        write_path_csv_header(os);
        for (std::size_t i = 0; i < std::min(cfg.paths_to_write, s.n_paths); ++i) {
            const auto jp = sim.jumps(s, i);
            write_path_csv(os, i, integrate_path(jp, cfg.model.drift, s.theta, s.x0, s.h), jp);
        }
    }
    std::vector<double> nj(n_jumps.begin(), n_jumps.end());
    run.write_json("summary.json", {{"x_T", estimate_json(mean_estimate(xt))},
                                    {"jumps_per_path", estimate_json(mean_estimate(nj))},
                                    {"intensity", sim.sampler().intensity()},
                                    {"compensator_drift", sim.sampler().comp_drift()}});
    run.finish(kOk, "ok");
    return kOk;
}

int cmd_weights(Run& run) {
    const auto& cfg = run.cfg();
    const Simulator sim(cfg.model, cfg.sim.eps);
    const auto ens = sim.ensemble(cfg.sim);
    {
        auto os = run.open("weights.csv");
        write_weights_csv_header(os);
        for (std::size_t i = 0; i < ens.size(); ++i) write_weights_csv(os, i, ens.paths[i].weights);
    }
    {
        auto os = run.open("bundles.csv");
        write_bundle_csv_header(os);
        for (std::size_t i = 0; i < ens.size(); ++i) write_bundle_csv(os, i, ens.paths[i].bundle);
    }
    const auto w1 = mc_expectation(ens, TestFunction::one, WeightKind::xi1);
    const auto w2 = mc_expectation(ens, TestFunction::one, WeightKind::xi2);
    auto z = [](const McEstimate& e) { return e.std_error > 0.0 ? e.value / e.std_error : 0.0; };
    run.write_json("summary.json",
                   {{"n_paths", ens.size()},
                    {"degenerate", ens.degenerate_count()},
                    {"degenerate_fraction", static_cast<double>(ens.degenerate_count()) / ens.size()},
                    {"xi1_mean", estimate_json(w1)},
                    {"xi1_z", z(w1)},
                    {"xi2_mean", estimate_json(w2)},
                    {"xi2_z", z(w2)}});
    run.finish(kOk, "ok");
    return kOk;
}

int cmd_check_identities(Run& run, bool gate) {
    const auto& cfg = run.cfg();
    const Simulator sim(cfg.model, cfg.sim.eps);
    const auto data = prepare_identity_data(sim, cfg.sim);
    const double zmax = cfg.z_threshold;

    json rows = json::array();
    bool gate_ok = true;
    std::vector<std::string> failures;
    auto os = run.open("identities.csv");
    os.precision(17);
    os << "check,order,fn,left,left_se,right,right_se,diff_se,z,valid\n";
    auto note = [&](const std::string& label, double z, bool valid) {
        if (!(std::abs(z) <= zmax) || !valid) {
            gate_ok = false;
            failures.push_back(label);
        }
    };

    for (auto weight : {WeightKind::xi1, WeightKind::xi2}) {
        const auto e = mc_expectation(data.center, TestFunction::one, weight);
        const double z = e.std_error > 0.0 ? e.value / e.std_error : 0.0;
        const std::string name = weight == WeightKind::xi1 ? "zero_mean_xi1" : "zero_mean_xi2";
        os << name << ',' << (weight == WeightKind::xi1 ? 1 : 2) << ",one,0,0," << e.value << ',' << e.std_error
           << ',' << e.std_error << ',' << z << ",1\n";
        rows.push_back({{"check", name}, {"mean", estimate_json(e)}, {"z", z}});
        note(name, z, true);
    }

    const std::pair<int, TestFunction> cases[] = {{1, TestFunction::id},
                                                  {1, TestFunction::sin},
                                                  {2, TestFunction::sin},
                                                  {2, TestFunction::bounded_rational}};
    for (const auto& [order, fn] : cases) {
        const auto r = check_derivative_identity(data, order, fn);
        const std::string name = "derivative_order" + std::to_string(order) + "_" + to_string(fn);
        os << "derivative," << order << ',' << to_string(fn) << ',' << r.left << ',' << r.left_se << ','
           << r.right << ',' << r.right_se << ',' << r.diff_se << ',' << r.z << ',' << r.valid << '\n';
        os << "pathwise," << order << ',' << to_string(fn) << ',' << r.pathwise << ',' << r.pathwise_se << ','
           << r.right << ',' << r.right_se << ",," << r.pathwise_z << ',' << r.valid << '\n';
        rows.push_back({{"check", name},
                        {"order", order},
                        {"fn", to_string(fn)},
                        {"left", r.left},
                        {"left_se", r.left_se},
                        {"right", r.right},
                        {"right_se", r.right_se},
                        {"diff_se", r.diff_se},
                        {"z", r.z},
                        {"pathwise", r.pathwise},
                        {"pathwise_se", r.pathwise_se},
                        {"pathwise_z", r.pathwise_z},
                        {"left_all_paths", r.left_all_paths},
                        {"n_used", r.n_used},
                        {"n_excluded", r.n_excluded},
                        {"exclusion_fraction", r.exclusion_fraction},
                        {"valid", r.valid}});
        note(name, r.z, r.valid);
        note(name + "_pathwise", r.pathwise_z, r.valid);
    }

    for (auto g : {DualityFunctional::one, DualityFunctional::x_T}) {
        const auto d = check_duality(data.center, TestFunction::sin, g);
        const std::string gname = g == DualityFunctional::one ? "one" : "x_T";
        os << "duality_" << gname << ",1,sin," << d.lhs.value << ',' << d.lhs.std_error << ',' << d.rhs.value
           << ',' << d.rhs.std_error << ',' << d.diff_se << ',' << d.z << ",1\n";
        rows.push_back({{"check", "duality_" + gname},
                        {"lhs", estimate_json(d.lhs)},
                        {"rhs", estimate_json(d.rhs)},
                        {"diff_se", d.diff_se},
                        {"z", d.z}});
        note("duality_" + gname, d.z, true);
    }
    os.close();

    run.write_json("report.json", {{"z_threshold", zmax},
                                   {"n_paths", data.center.size()},
                                   {"degenerate", data.center.degenerate_count()},
                                   {"all_within_threshold", gate_ok},
                                   {"failures", failures},
                                   {"checks", rows}});
    if (gate && !gate_ok) {
        std::cerr << "error=gate reason=\"" << failures.front() << " exceeds z threshold " << zmax << "\"\n";
        run.finish(kGate, "identity gate failed");
        return kGate;
    }
    run.finish(kOk, "ok");
    return kOk;
}

int cmd_densities(Run& run, bool consistency) {
    const auto& cfg = run.cfg();
    const Simulator sim(cfg.model, cfg.sim.eps);
    const auto grid = uniform_grid(cfg.grid.y_min, cfg.grid.y_max, cfg.grid.points);
    const auto ens = sim.ensemble(cfg.sim);
    KernelOptions opts;
    opts.bandwidth = cfg.bandwidth;
    const double bw = kernel_bandwidth(ens, opts);
    opts.bandwidth = bw;
    const auto p = kernel_density(ens, grid, opts);

    auto os = run.open("densities.csv");
    os.precision(17);
    os << "y,p,p_se,g,g_se,G,G_se,second,second_se,n_eff\n";
    std::size_t defined = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto b = bridge_estimate(ens, grid[i], bw);
        os << grid[i] << ',';
        if (p[i].estimate) os << p[i].estimate->value << ',' << p[i].estimate->std_error;
        else os << ',';
        os << ',';
        if (b.defined) {
            ++defined;
            os << b.g << ',' << b.g_se << ',' << b.G << ',' << b.G_se << ',' << b.second << ',' << b.second_se;
        } else {
            os << ",,,,,";
        }
        os << ',' << b.n_eff << '\n';
    }
    os.close();

    json summary{{"bandwidth", bw},
                 {"n_paths", ens.size()},
                 {"degenerate", ens.degenerate_count()},
                 {"grid_points", grid.size()},
                 {"defined_points", defined}};

    if (consistency) {
        const auto rep = check_score_consistency(sim, cfg.sim, grid, cfg.p_min, bw);
        auto cs = run.open("consistency.csv");
        cs.precision(17);
        cs << "y,p,qualifies,g,g_se,dlogp,G,second,second_se,d2logp,dg\n";
        for (const auto& r : rep.rows) {
            cs << r.y << ',' << r.p << ',' << r.qualifies << ',' << r.g << ',' << r.g_se << ',' << r.dlogp << ','
               << r.G << ',' << r.second << ',' << r.second_se << ',' << r.d2logp << ',' << r.dg << '\n';
        }
        summary["consistency"] = {{"p_min", rep.p_min},
                                  {"qualifying", rep.qualifying},
                                  {"max_rel_g", rep.max_rel_g},
                                  {"max_rel_second", rep.max_rel_second},
                                  {"max_rel_dg", rep.max_rel_dg}};
    }
    run.write_json("summary.json", summary);
    run.finish(kOk, "ok");
    return kOk;
}

ObservationSet load_observations(Run& run, const Simulator& sim) {
    const auto& cfg = run.cfg();
    ObservationSet obs;
    if (cfg.data_path) {
        std::ifstream in(*cfg.data_path);
        if (!in) throw ConfigError("data.path '" + *cfg.data_path + "' not readable");
        try {
            obs = read_observations_csv(in);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("data.path: ") + e.what());
        }
    } else {
        const auto& sy = cfg.synthetic;
        obs = simulate_observations(sim, sy.theta, sy.x0, sy.n, sy.dt, cfg.sim.h, sy.seed);
    }
    auto os = run.open("observations.csv");
    write_observations_csv(os, obs);
    return obs;
}

void write_terms(Run& run, const LoglikDerivatives& d) {
    auto os = run.open("terms.csv");
    os.precision(17);
    os << "transition,defined,g,g_se,second,second_se,bandwidth,n_eff\n";
    for (std::size_t k = 0; k < d.terms.size(); ++k) {
        const auto& t = d.terms[k];
        os << k + 1 << ',' << t.defined << ',' << t.g << ',' << t.g_se << ',' << t.second << ',' << t.second_se
           << ',' << t.bandwidth << ',' << t.n_eff << '\n';
    }
}

int cmd_loglik(Run& run) {
    const auto& cfg = run.cfg();
    const Simulator sim(cfg.model, cfg.sim.eps);
    const auto obs = load_observations(run, sim);
    const auto d = loglik_derivatives(sim, obs, cfg.sim.theta, cfg.likelihood);
    write_terms(run, d);
    run.write_json("loglik.json", {{"theta", cfg.sim.theta},
                                   {"transitions", obs.transitions()},
                                   {"ell1", estimate_json(d.ell1)},
                                   {"ell2", estimate_json(d.ell2)},
                                   {"used", d.used},
                                   {"dropped", d.dropped},
                                   {"reliable", d.reliable}});
    run.finish(kOk, "ok");
    return kOk;
}

int cmd_fit(Run& run) {
    const auto& cfg = run.cfg();
    const Simulator sim(cfg.model, cfg.sim.eps);
    const auto obs = load_observations(run, sim);
    const auto res = fit(sim, obs, cfg.theta0, cfg.likelihood, cfg.fit);
    {
        auto os = run.open("trace.csv");
        os.precision(17);
        os << "evaluation,theta,ell1,ell1_se,ell2,ell2_se,dropped\n";
        for (std::size_t i = 0; i < res.score_trace.size(); ++i) {
            const auto& e = res.score_trace[i];
            os << i << ',' << e.theta << ',' << e.ell1 << ',' << e.ell1_se << ',' << e.ell2 << ',' << e.ell2_se << ','
               << e.dropped << '\n';
        }
    }
    run.write_json("fit.json", {{"theta_hat", res.theta_hat},
                                {"iterations", res.iterations},
                                {"evaluations", res.score_trace.size()},
                                {"observed_information", res.observed_information},
                                {"ci_low", std::isfinite(res.ci_low) ? json(res.ci_low) : json(nullptr)},
                                {"ci_high", std::isfinite(res.ci_high) ? json(res.ci_high) : json(nullptr)},
                                {"converged", res.converged},
                                {"reliable", res.reliable},
                                {"message", res.message}});
    if (!res.converged) {
        std::cerr << "error=numerical reason=\"fit did not converge: " << res.message << "\"\n";
        run.finish(kNumerical, res.message);
        return kNumerical;
    }
    run.finish(kOk, "ok");
    return kOk;
}

std::string one_line(std::string s) {
    for (auto& c : s) {
        if (c == '\n' || c == '"') c = ' ';
    }
    return s;
}

int run_command(Run& run, const std::string& command, const Overrides& ov) {
    if (command == "validate") return cmd_validate(run);
    if (command == "simulate") return cmd_simulate(run);
    if (command == "weights") return cmd_weights(run);
    if (command == "check-identities") return cmd_check_identities(run, ov.gate);
    if (command == "densities") return cmd_densities(run, ov.consistency);
    if (command == "loglik") return cmd_loglik(run);
    if (command == "fit") return cmd_fit(run);
    std::cerr << "error=usage reason=\"unknown command " << command << "\"\n";
    return kConfig;
}

int dispatch(const std::string& command, const Overrides& ov) {
    std::optional<Run> run;
    auto fail = [&](const char* kind, const std::exception& e, int code) {
        std::cerr << "error=" << kind << " reason=\"" << one_line(e.what()) << "\"\n";
        if (run) {
            try {
                run->finish(code, std::string("error: ") + one_line(e.what()));
            } catch (const std::exception&) {
            }
        }
        return code;
    };
    try {
        run.emplace(command, ov);
        return run_command(*run, command, ov);
    } catch (const ConfigError& e) {
        return fail("config", e, kConfig);
    } catch (const std::invalid_argument& e) {
        return fail("config", e, kConfig);
    } catch (const NumericalError& e) {
        return fail("numerical", e, kNumerical);
    } catch (const std::exception& e) {
        return fail("internal", e, kInternal);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Malliavin-weight sensitivities and likelihood fitting for Levy-driven SDEs"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Overrides ov;
    const std::pair<const char*, const char*> commands[] = {
        {"validate", "check the model hypotheses"},
        {"simulate", "simulate paths and terminal values"},
        {"weights", "per-path sensitivities and weights"},
        {"check-identities", "Monte Carlo checks of the weight identities"},
        {"densities", "kernel estimates of the density and its log-derivatives"},
        {"loglik", "log-likelihood derivatives for observed data"},
        {"fit", "Newton maximum-likelihood fit"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("config", ov.config_path, "config file")->required();
        sub->add_option("--out", ov.out_dir, "output directory (overrides output.dir)");
        sub->add_option("--seed", ov.seed, "master seed (overrides sim.master_seed)")->check(CLI::NonNegativeNumber);
        sub->add_option("--n-paths", ov.n_paths, "paths per ensemble (overrides sim.n_paths)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--theta", ov.theta, "parameter value (overrides sim.theta)");
        sub->add_option("--threads", ov.threads, "worker threads, 0 = all cores");
        if (std::string(name) == "check-identities") {
            sub->add_flag("--gate", ov.gate, "exit 4 when a z-score exceeds gate.z_threshold");
        }
        if (std::string(name) == "densities") {
            sub->add_flag("--consistency", ov.consistency, "also compare against theta finite differences");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error=usage reason=\"" << one_line(e.what()) << "\"\n";
        return kConfig;
    }
    return dispatch(app.get_subcommands().front()->get_name(), ov);
}

// Command-line surface: run experiments, re-evaluate checkpoints, check
// gradients, compute hypervolumes, and export synthetic datasets.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hetpfl/config.hpp"
#include "hetpfl/gradcheck.hpp"
#include "hetpfl/runio.hpp"
#include "hetpfl/serialize.hpp"

namespace fs = std::filesystem;
using namespace hetpfl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

fs::path resolve_output_dir(const std::string& from_config, const std::string& from_flag) {
    std::string chosen = !from_flag.empty() ? from_flag : from_config;
    if (chosen.empty()) chosen = "run";
    fs::path p(chosen);
    if (p.is_relative()) {
        if (const char* root = std::getenv("HETPFL_OUTPUT_ROOT")) p = fs::path(root) / p;
    }
    return p;
}

int cmd_run(const std::string& config_path, const std::string& out_flag,
            const std::vector<std::uint64_t>& seed_override, const std::string& mode_override) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (!seed_override.empty()) cfg.seeds = seed_override;
    if (!mode_override.empty()) cfg.mode = parse_mode(mode_override);
    for (const std::string& w : cfg.warnings) std::cerr << "warning: " << w << "\n";

    fs::path dir = resolve_output_dir(cfg.output_dir, out_flag);
    std::vector<SeedOutcome> outcomes = execute_run(cfg, dir);

    std::cout << "run directory: " << dir.string() << "\n";
    double local = 0, global = 0;
    for (const SeedOutcome& o : outcomes) {
        local += o.mean_local_hv;
        global += o.global_hv;
        std::cout << "seed " << o.seed << ": local HV " << format_double(o.mean_local_hv)
                  << ", global HV " << format_double(o.global_hv) << "\n";
    }
    double n = static_cast<double>(outcomes.size());
    std::cout << "mean over seeds: local HV " << format_double(local / n) << ", global HV "
              << format_double(global / n) << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& run_dir, std::size_t m, const std::string& out_flag) {
    fs::path run(run_dir);
    if (!fs::exists(run / "config.json"))
        throw ParseError("no config.json under " + run_dir + " (not a run directory?)");
    bool any = false;
    std::vector<fs::path> seed_dirs;
    for (const auto& entry : fs::directory_iterator(run))
        if (entry.is_directory() && entry.path().filename().string().rfind("seed_", 0) == 0)
            seed_dirs.push_back(entry.path());
    std::sort(seed_dirs.begin(), seed_dirs.end());
    for (const fs::path& sd : seed_dirs) {
        fs::path cp_path = sd / "checkpoint.json";
        if (!fs::exists(cp_path)) throw ParseError("missing checkpoint: " + cp_path.string());
        Checkpoint cp = load_checkpoint(cp_path.string());
        fs::path out = out_flag.empty() ? sd / ("eval_m" + std::to_string(m))
                                        : fs::path(out_flag) / sd.filename();
        reevaluate_checkpoint(cp, m, out);
        std::cout << sd.filename().string() << ": reports written to " << out.string() << "\n";
        any = true;
    }
    if (!any) throw ParseError("no seed_* directories with checkpoints under " + run_dir);
    return kExitOk;
}

int cmd_gradcheck(int instances, std::uint64_t seed) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<CheckResult> results = run_all_checks(instances, seed);
    bool all_pass = true;
    for (const CheckResult& r : results) {
        std::printf("%-36s %s  max rel err %.3e  (%d instances)\n", r.name.c_str(),
                    r.pass ? "PASS" : "FAIL", r.max_rel_err, r.instances);
        all_pass = all_pass && r.pass;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%zu checks in %.1fs: %s\n", results.size(), secs,
                all_pass ? "all passed" : "FAILURES");
    return all_pass ? kExitOk : kExitRuntime;
}

int cmd_hv(const std::string& points_path, double r1, double r2) {
    std::ifstream in(points_path);
    if (!in) throw ConfigError("points file not found: " + points_path);
    std::vector<Point2> pts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        double x = 0, y = 0;
        char comma = 0;
        std::istringstream is(line);
        if (!(is >> x >> comma >> y) || comma != ',')
            throw ConfigError("points file line " + std::to_string(line_no) +
                              ": expected 'x,y', got '" + line + "'");
        pts.push_back({x, y});
    }
    RefPoint r{r1, r2};
    std::cout << "hv " << format_double(hv_2d(pts, r)) << "\n";
    for (std::size_t i = 0; i < pts.size(); ++i)
        std::cout << "hvc " << i << " " << format_double(hvc(i, pts, r)) << "\n";
    return kExitOk;
}

int cmd_gen_data(std::size_t n, std::size_t clients, double heterogeneity, std::uint64_t seed,
                 const std::string& out_dir) {
    std::vector<Dataset> parts = generate_synthetic(n, clients, heterogeneity, seed);
    fs::path dir(out_dir);
    fs::create_directories(dir);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        fs::path file = dir / ("client_" + std::to_string(k) + ".csv");
        std::ofstream out(file);
        if (!out) throw ParseError("cannot write " + file.string());
        out << "f1,f2,sensitive,label\n";
        const Dataset& ds = parts[k];
        for (std::size_t i = 0; i < ds.size(); ++i)
            out << format_double(ds.features.at(i, 0)) << ","
                << format_double(ds.features.at(i, 1)) << "," << ds.sensitive[i] << ","
                << ds.labels[i] << "\n";
        std::cout << file.string() << ": " << ds.size() << " rows\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated performance-fairness Pareto front laboratory"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "execute a configured experiment for every seed");
    std::string run_config, run_out, run_mode;
    std::vector<std::uint64_t> run_seeds;
    run->add_option("--config", run_config, "experiment config (JSON)")->required();
    run->add_option("--out", run_out, "output directory (overrides config)");
    run->add_option("--seed", run_seeds, "replace the config's seed list");
    run->add_option("--mode", run_mode, "hetpfl | ablate-psa | ablate-phf | ablate-both");

    auto* eval = app.add_subcommand("eval", "recompute front reports from checkpoints");
    std::string eval_run, eval_out;
    std::size_t eval_m = 1000;
    eval->add_option("--run", eval_run, "run directory written by 'run'")->required();
    eval->add_option("--m", eval_m, "grid resolution (default 1000)");
    eval->add_option("--out", eval_out, "output directory (default inside the run)");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference and estimator diagnostics");
    int gc_instances = 50;
    std::uint64_t gc_seed = 17;
    gc->add_option("--instances", gc_instances, "random instances per check (default 50)");
    gc->add_option("--seed", gc_seed, "random seed");

    auto* hv = app.add_subcommand("hv", "exact 2-d hypervolume and per-point contributions");
    std::string hv_points;
    std::vector<double> hv_ref = {1.0, 1.0};
    hv->add_option("--points", hv_points, "CSV of x,y rows (no header)")->required();
    hv->add_option("--ref", hv_ref, "reference point (default 1 1)")->expected(2);

    auto* gen = app.add_subcommand("gen-data", "export synthetic client datasets to CSV");
    std::size_t gen_n = 5000, gen_clients = 3;
    double gen_het = 0.5;
    std::uint64_t gen_seed = 1;
    std::string gen_out = "data";
    gen->add_option("--n", gen_n, "total samples (default 5000)");
    gen->add_option("--clients", gen_clients, "client count (default 3)");
    gen->add_option("--heterogeneity", gen_het, "Dirichlet concentration (default 0.5)");
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--out", gen_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(run_config, run_out, run_seeds, run_mode);
        if (eval->parsed()) return cmd_eval(eval_run, eval_m, eval_out);
        if (gc->parsed()) return cmd_gradcheck(gc_instances, gc_seed);
        if (hv->parsed()) return cmd_hv(hv_points, hv_ref[0], hv_ref[1]);
        if (gen->parsed()) return cmd_gen_data(gen_n, gen_clients, gen_het, gen_seed, gen_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

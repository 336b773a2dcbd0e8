#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetpfl/config.hpp"
#include "hetpfl/eval.hpp"
#include "hetpfl/fed.hpp"
#include "hetpfl/serialize.hpp"

namespace hetpfl {

/// Shortest round-trip decimal rendering, so CSV output is byte-stable.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// One writer per run directory. The lock file is created exclusively and
/// removed on destruction; a stale lock means another writer is (or was)
/// active and the caller must not proceed.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (std::filesystem::exists(path_))
            throw ConfigError("run directory is locked by another writer: " + path_.string());
        std::ofstream out(path_);
        if (!out) throw ConfigError("cannot create lock file: " + path_.string());
        out << "locked\n";
    }
    ~DirLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    std::filesystem::path path_;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write " + path.string());
    out << body;
}

}  // namespace detail

inline std::string front_report_csv(const FrontReport& rep) {
    std::string out = "lambda1,lambda2,error_rate,dp_disparity,dominated\n";
    for (std::size_t i = 0; i < rep.points.size(); ++i) {
        const FrontPoint& p = rep.points[i];
        out += format_double(p.lambda.l1) + "," + format_double(p.lambda.l2) + "," +
               format_double(p.error) + "," + format_double(p.dp) + "," +
               (rep.dominated[i] ? "1" : "0") + "\n";
    }
    return out;
}

inline ordered_json front_report_summary(const FrontReport& rep, std::uint64_t seed,
                                         const std::string& config_hash) {
    ordered_json j;
    j["scope"] = rep.scope == FrontScope::global ? "global" : "local";
    if (rep.scope == FrontScope::local) j["client"] = rep.client;
    j["hv"] = rep.hv;
    j["m"] = rep.grid_size;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    return j;
}

inline ordered_json telemetry_line(const RoundTelemetry& tel, std::uint64_t seed,
                                   const std::string& config_hash) {
    ordered_json j;
    j["round"] = tel.round;
    j["client"] = tel.client;
    j["comm_ce"] = tel.comm_ce;
    j["hyper_tch"] = tel.hyper_tch;
    j["val_error"] = tel.val_error;
    j["val_dp"] = tel.val_dp;
    j["val_ce"] = tel.val_ce;
    j["val_fair"] = tel.val_fair;
    j["val_tch_tilde"] = tel.val_tch_tilde;
    j["val_tch_grid"] = tel.val_tch_grid;
    j["alpha"] = {tel.alpha.a1, tel.alpha.a2};
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    return j;
}

/// Write one seed's artifacts under `<dir>/seed_<s>/`: telemetry lines, the
/// checkpoint, and the local/global front reports.
inline void write_seed_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                 std::uint64_t seed, const RunResult& run) {
    std::filesystem::path sd = dir / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(sd);
    std::string hash = cfg.hash();

    std::string telemetry;
    for (const RoundTelemetry& tel : run.telemetry)
        telemetry += telemetry_line(tel, seed, hash).dump() + "\n";
    detail::write_text(sd / "telemetry.jsonl", telemetry);

    save_checkpoint(Checkpoint::from_run(run, seed, hash, cfg.mode),
                    (sd / "checkpoint.json").string());

    ordered_json fronts = ordered_json::array();
    for (const FrontReport& rep : run.local_reports) {
        detail::write_text(sd / ("local_front_client_" + std::to_string(rep.client) + ".csv"),
                           front_report_csv(rep));
        fronts.push_back(front_report_summary(rep, seed, hash));
    }
    detail::write_text(sd / "global_front.csv", front_report_csv(run.global_report));
    fronts.push_back(front_report_summary(run.global_report, seed, hash));

    ordered_json fj;
    fj["reports"] = std::move(fronts);
    fj["mean_local_hv"] = run.mean_local_hv;
    fj["global_hv"] = run.global_hv;
    detail::write_text(sd / "fronts.json", fj.dump(1) + "\n");
}

struct SeedOutcome {
    std::uint64_t seed = 0;
    double mean_local_hv = 0.0;
    double global_hv = 0.0;
};

inline ordered_json cross_seed_summary(const ExperimentConfig& cfg,
                                       const std::vector<SeedOutcome>& outcomes) {
    auto stats = [](std::vector<double> vals) {
        double mean = 0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= static_cast<double>(vals.size());
        ordered_json j;
        j["mean"] = mean;
        j["std"] = std::sqrt(var);
        j["per_seed"] = vals;
        return j;
    };
    std::vector<double> local, global;
    std::vector<std::uint64_t> seeds;
    for (const SeedOutcome& o : outcomes) {
        local.push_back(o.mean_local_hv);
        global.push_back(o.global_hv);
        seeds.push_back(o.seed);
    }
    ordered_json j;
    j["format"] = "hetpfl-summary";
    j["config_hash"] = cfg.hash();
    j["mode"] = mode_name(cfg.mode);
    j["seeds"] = seeds;
    j["local_hv"] = stats(local);
    j["global_hv"] = stats(global);
    j["warnings"] = cfg.warnings;
    return j;
}

/// Execute the configured experiment for every seed and write the full run
/// directory. Returns the per-seed outcomes that went into summary.json.
inline std::vector<SeedOutcome> execute_run(const ExperimentConfig& cfg,
                                            const std::filesystem::path& dir) {
    DirLock lock(dir);
    detail::write_text(dir / "config.json", cfg.canonical_dump() + "\n");

    std::vector<SeedOutcome> outcomes;
    for (std::uint64_t seed : cfg.seeds) {
        RoundConfig rc = cfg.round;
        rc.seed = seed;
        RunResult run = run_experiment(cfg.data, rc, cfg.mode);
        write_seed_artifacts(dir, cfg, seed, run);
        outcomes.push_back(SeedOutcome{seed, run.mean_local_hv, run.global_hv});
    }
    detail::write_text(dir / "summary.json", cross_seed_summary(cfg, outcomes).dump(1) + "\n");
    return outcomes;
}

/// Recompute front reports from a checkpoint at grid resolution m.
inline void reevaluate_checkpoint(const Checkpoint& cp, std::size_t m,
                                  const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    ordered_json fronts = ordered_json::array();
    for (std::size_t k = 0; k < cp.hypernets.size(); ++k) {
        FrontReport rep = local_hv_report(cp.psi, cp.hypernets[k], cp.test_sets[k], k, m);
        detail::write_text(out_dir / ("local_front_client_" + std::to_string(k) + ".csv"),
                           front_report_csv(rep));
        fronts.push_back(front_report_summary(rep, cp.seed, cp.config_hash));
    }
    Dataset union_test = concat_datasets(cp.test_sets);
    const FusionNet* fusion = cp.has_fusion ? &cp.fusion : nullptr;
    FrontReport global = global_hv_report(cp.psi, cp.hypernets, fusion, union_test, m);
    detail::write_text(out_dir / "global_front.csv", front_report_csv(global));
    fronts.push_back(front_report_summary(global, cp.seed, cp.config_hash));

    double local_acc = 0.0;
    for (std::size_t k = 0; k < cp.hypernets.size(); ++k)
        local_acc += fronts[k].at("hv").get<double>();
    ordered_json fj;
    fj["reports"] = std::move(fronts);
    fj["mean_local_hv"] = local_acc / static_cast<double>(cp.hypernets.size());
    fj["global_hv"] = global.hv;
    detail::write_text(out_dir / "fronts.json", fj.dump(1) + "\n");
}

}  // namespace hetpfl

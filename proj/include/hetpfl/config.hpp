#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetpfl/fed.hpp"
#include "hetpfl/serialize.hpp"

namespace hetpfl {

/// Full experiment description as read from a JSON config file. Defaults
/// follow the reference hyperparameters (15 rounds of 30 local epochs,
/// batch 128, 4 sampled preferences, reference point (1,1), 1000 evaluation
/// models); every field is overridable.
struct ExperimentConfig {
    DataConfig data;
    RoundConfig round;
    Mode mode = Mode::hetpfl;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::string output_dir;
    bool allow_nonstandard_epochs = false;
    std::vector<std::string> warnings;

    std::string canonical_dump() const;
    std::string hash() const { return fnv1a_hex(canonical_dump()); }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("key '" + key + "' has the wrong type");
    }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    detail::reject_unknown_keys(
        j,
        {"dataset", "mode", "seeds", "output_dir", "rounds", "tau_c", "tau_p", "pref_batch",
         "fusion_epochs", "lr", "alpha_lr", "alpha_warmup_rounds", "batch_size", "lambda_tilde",
         "hvc_eval_full", "eval_models", "allow_nonstandard_epochs", "split"},
        "config");

    if (!j.contains("dataset")) throw ConfigError("config requires a 'dataset' object");
    const nlohmann::json& ds = j.at("dataset");
    detail::reject_unknown_keys(
        ds, {"type", "n", "clients", "heterogeneity", "csv", "schema"}, "dataset");
    std::string type = detail::get_or<std::string>(ds, "type", "synthetic");
    if (type == "synthetic") {
        cfg.data.synthetic = true;
        cfg.data.n = detail::get_or<std::size_t>(ds, "n", 5000);
        cfg.data.clients = detail::get_or<std::size_t>(ds, "clients", 3);
    } else if (type == "csv") {
        cfg.data.synthetic = false;
        if (!ds.contains("csv") || !ds.contains("schema"))
            throw ConfigError("csv dataset requires 'csv' and 'schema' paths");
        cfg.data.csv_path = ds.at("csv").get<std::string>();
        cfg.data.schema_path = ds.at("schema").get<std::string>();
        cfg.data.clients = detail::get_or<std::size_t>(ds, "clients", 2);
    } else {
        throw ConfigError("dataset.type must be 'synthetic' or 'csv'");
    }
    cfg.data.heterogeneity = detail::get_or<double>(ds, "heterogeneity", 0.5);
    if (!(cfg.data.heterogeneity > 0.0))
        throw ConfigError("dataset.heterogeneity must be positive");
    if (cfg.data.clients < 2) throw ConfigError("dataset.clients must be at least 2");

    if (j.contains("split")) {
        const nlohmann::json& sp = j.at("split");
        detail::reject_unknown_keys(sp, {"test_fraction", "train_ratio", "val_ratio"}, "split");
        cfg.data.split.test_fraction = detail::get_or<double>(sp, "test_fraction", 0.30);
        cfg.data.split.train_ratio = detail::get_or<double>(sp, "train_ratio", 9.0);
        cfg.data.split.val_ratio = detail::get_or<double>(sp, "val_ratio", 1.0);
    }

    cfg.round.rounds = detail::get_or<int>(j, "rounds", 15);
    cfg.round.tau_c = detail::get_or<int>(j, "tau_c", 15);
    cfg.round.tau_p = detail::get_or<int>(j, "tau_p", 15);
    cfg.round.pref_batch = detail::get_or<int>(j, "pref_batch", 4);
    cfg.round.fusion_epochs = detail::get_or<int>(j, "fusion_epochs", 200);
    cfg.round.lr = detail::get_or<double>(j, "lr", 0.003);
    cfg.round.alpha_lr = detail::get_or<double>(j, "alpha_lr", 0.02);
    cfg.round.alpha_warmup_rounds = detail::get_or<int>(j, "alpha_warmup_rounds", 5);
    cfg.round.batch_size = detail::get_or<std::size_t>(j, "batch_size", 128);
    cfg.round.hvc_eval_full = detail::get_or<bool>(j, "hvc_eval_full", false);
    cfg.round.eval_models = detail::get_or<std::size_t>(j, "eval_models", 1000);
    if (j.contains("lambda_tilde")) {
        auto lt = j.at("lambda_tilde").get<std::vector<double>>();
        if (lt.size() != 2) throw ConfigError("lambda_tilde must have two components");
        cfg.round.lambda_tilde = PreferenceVector::of(lt[0], lt[1]);
    }

    if (cfg.round.rounds < 1) throw ConfigError("rounds must be at least 1");
    if (cfg.round.tau_c < 0 || cfg.round.tau_p < 0)
        throw ConfigError("tau_c and tau_p must be nonnegative");
    if (cfg.round.pref_batch < 2) throw ConfigError("pref_batch must be at least 2");
    if (cfg.round.fusion_epochs < 0) throw ConfigError("fusion_epochs must be nonnegative");
    if (!(cfg.round.lr > 0.0) || !(cfg.round.alpha_lr > 0.0))
        throw ConfigError("learning rates must be positive");
    if (cfg.round.batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (cfg.round.eval_models < 2) throw ConfigError("eval_models must be at least 2");

    cfg.mode = parse_mode(detail::get_or<std::string>(j, "mode", "hetpfl"));
    cfg.seeds = detail::get_or<std::vector<std::uint64_t>>(j, "seeds", {1, 2, 3});
    if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
    cfg.output_dir = detail::get_or<std::string>(j, "output_dir", "");
    cfg.allow_nonstandard_epochs = detail::get_or<bool>(j, "allow_nonstandard_epochs", false);

    if (cfg.round.tau_c + cfg.round.tau_p != 30 && !cfg.allow_nonstandard_epochs)
        cfg.warnings.push_back("tau_c + tau_p = " +
                               std::to_string(cfg.round.tau_c + cfg.round.tau_p) +
                               " differs from the reference 30 local epochs per round");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

/// Canonical snapshot: every field explicit, fixed key order. Two configs
/// with equal snapshots produce byte-identical artifacts for equal seeds.
inline std::string ExperimentConfig::canonical_dump() const {
    ordered_json j;
    ordered_json ds;
    ds["type"] = data.synthetic ? "synthetic" : "csv";
    if (data.synthetic) {
        ds["n"] = data.n;
    } else {
        ds["csv"] = data.csv_path;
        ds["schema"] = data.schema_path;
    }
    ds["clients"] = data.clients;
    ds["heterogeneity"] = data.heterogeneity;
    j["dataset"] = std::move(ds);
    ordered_json sp;
    sp["test_fraction"] = data.split.test_fraction;
    sp["train_ratio"] = data.split.train_ratio;
    sp["val_ratio"] = data.split.val_ratio;
    j["split"] = std::move(sp);
    j["mode"] = mode_name(mode);
    j["seeds"] = seeds;
    j["rounds"] = round.rounds;
    j["tau_c"] = round.tau_c;
    j["tau_p"] = round.tau_p;
    j["pref_batch"] = round.pref_batch;
    j["fusion_epochs"] = round.fusion_epochs;
    j["lr"] = round.lr;
    j["alpha_lr"] = round.alpha_lr;
    j["alpha_warmup_rounds"] = round.alpha_warmup_rounds;
    j["batch_size"] = round.batch_size;
    j["lambda_tilde"] = {round.lambda_tilde.l1, round.lambda_tilde.l2};
    j["hvc_eval_full"] = round.hvc_eval_full;
    j["eval_models"] = round.eval_models;
    j["allow_nonstandard_epochs"] = allow_nonstandard_epochs;
    return j.dump(1);
}

}  // namespace hetpfl

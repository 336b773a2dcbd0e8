#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetpfl/fed.hpp"
#include "hetpfl/nets.hpp"

namespace hetpfl {

using ordered_json = nlohmann::ordered_json;

inline constexpr int kCheckpointVersion = 1;

/// FNV-1a 64-bit over a byte string, rendered as fixed-width hex.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

inline ordered_json tensor_to_json(const Tensor& t) {
    ordered_json j;
    j["shape"] = t.shape;
    j["data"] = t.data;
    return j;
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                  j.at("data").get<std::vector<double>>());
}

template <typename Net>
ordered_json net_to_json(const Net& net) {
    ordered_json j;
    auto names = Net::param_names();
    auto params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) j[names[i]] = tensor_to_json(*params[i]);
    return j;
}

template <typename Net>
void net_from_json(const nlohmann::json& j, Net& net) {
    auto names = Net::param_names();
    auto params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor loaded = tensor_from_json(j.at(names[i]));
        if (!loaded.same_shape(*params[i]))
            throw ParseError("checkpoint: parameter " + names[i] + " has shape " +
                             loaded.shape_str() + ", expected " + params[i]->shape_str());
        *params[i] = std::move(loaded);
    }
}

}  // namespace detail

/// Everything needed to re-evaluate a finished run: the final encoder, the
/// client hypernets and sampling parameters, the fusion net when trained,
/// and the per-client test sets the reports are computed on.
struct Checkpoint {
    std::uint64_t seed = 0;
    std::string config_hash;
    Mode mode = Mode::hetpfl;
    CommModel psi;
    std::vector<HyperNet> hypernets;
    std::vector<DirichletParams> alphas;
    bool has_fusion = false;
    FusionNet fusion = FusionNet::zeros(1);
    std::vector<Dataset> test_sets;

    static Checkpoint from_run(const RunResult& run, std::uint64_t seed,
                               const std::string& config_hash, Mode mode) {
        Checkpoint cp;
        cp.seed = seed;
        cp.config_hash = config_hash;
        cp.mode = mode;
        cp.psi = run.final_psi;
        for (const ClientState& c : run.clients) {
            cp.hypernets.push_back(c.beta);
            cp.alphas.push_back(c.alpha);
            cp.test_sets.push_back(c.test);
        }
        cp.has_fusion = run.server.fusion_trained;
        if (cp.has_fusion) cp.fusion = run.server.fusion;
        return cp;
    }
};

inline ordered_json checkpoint_payload(const Checkpoint& cp) {
    ordered_json j;
    j["format"] = "hetpfl-checkpoint";
    j["version"] = kCheckpointVersion;
    j["seed"] = cp.seed;
    j["config_hash"] = cp.config_hash;
    j["mode"] = mode_name(cp.mode);
    j["clients"] = cp.hypernets.size();
    j["psi"] = detail::net_to_json(cp.psi);
    ordered_json hypernets = ordered_json::array();
    for (const HyperNet& h : cp.hypernets) hypernets.push_back(detail::net_to_json(h));
    j["hypernets"] = std::move(hypernets);
    ordered_json alphas = ordered_json::array();
    for (const DirichletParams& a : cp.alphas) alphas.push_back({a.a1, a.a2});
    j["alphas"] = std::move(alphas);
    if (cp.has_fusion) {
        j["fusion"] = detail::net_to_json(cp.fusion);
    } else {
        j["fusion"] = nullptr;
    }
    ordered_json tests = ordered_json::array();
    for (const Dataset& ds : cp.test_sets) {
        ordered_json t;
        t["features"] = detail::tensor_to_json(ds.features);
        t["labels"] = ds.labels;
        t["sensitive"] = ds.sensitive;
        tests.push_back(std::move(t));
    }
    j["test_sets"] = std::move(tests);
    return j;
}

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
    ordered_json j = checkpoint_payload(cp);
    j["checksum"] = fnv1a_hex(j.dump());
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write checkpoint: " + path);
    out << j.dump(1) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("checkpoint not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
    try {
        if (j.at("format") != "hetpfl-checkpoint" || j.at("version") != kCheckpointVersion)
            throw ParseError("checkpoint " + path + ": unsupported format or version");

        Checkpoint cp;
        cp.seed = j.at("seed").get<std::uint64_t>();
        cp.config_hash = j.at("config_hash").get<std::string>();
        cp.mode = parse_mode(j.at("mode").get<std::string>());

        // verify the checksum over the canonical payload
        std::string recorded = j.at("checksum").get<std::string>();
        nlohmann::ordered_json payload;
        {
            std::ifstream again(path);
            payload = ordered_json::parse(again);
        }
        payload.erase("checksum");
        if (fnv1a_hex(payload.dump()) != recorded)
            throw ParseError("checkpoint " + path + ": checksum mismatch (corrupt file)");

        std::size_t clients = j.at("clients").get<std::size_t>();
        Tensor w1 = detail::tensor_from_json(j.at("psi").at("psi.w1"));
        cp.psi = CommModel::zeros(w1.shape[0]);
        detail::net_from_json(j.at("psi"), cp.psi);
        for (const auto& hj : j.at("hypernets")) {
            HyperNet h = HyperNet::zeros();
            detail::net_from_json(hj, h);
            cp.hypernets.push_back(std::move(h));
        }
        for (const auto& aj : j.at("alphas"))
            cp.alphas.push_back(DirichletParams{aj.at(0).get<double>(), aj.at(1).get<double>()});
        if (!j.at("fusion").is_null()) {
            cp.has_fusion = true;
            cp.fusion = FusionNet::zeros(clients);
            detail::net_from_json(j.at("fusion"), cp.fusion);
        }
        for (const auto& tj : j.at("test_sets")) {
            Dataset ds;
            ds.features = detail::tensor_from_json(tj.at("features"));
            ds.labels = tj.at("labels").get<std::vector<int>>();
            ds.sensitive = tj.at("sensitive").get<std::vector<int>>();
            cp.test_sets.push_back(std::move(ds));
        }
        if (cp.hypernets.size() != clients || cp.test_sets.size() != clients)
            throw ParseError("checkpoint " + path + ": client count mismatch");
        return cp;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
}

}  // namespace hetpfl

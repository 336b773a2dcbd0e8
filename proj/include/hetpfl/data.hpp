#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetpfl/rng.hpp"
#include "hetpfl/tensor.hpp"

namespace hetpfl {

/// A labeled dataset with a binary sensitive attribute kept separate from
/// the model-input features.
struct Dataset {
    Tensor features;             // [n x d]
    std::vector<int> labels;     // 0/1
    std::vector<int> sensitive;  // 0/1

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return features.shape.size() == 2 ? features.shape[1] : 0; }

    Dataset subset(const std::vector<std::size_t>& idx) const {
        Dataset out;
        std::size_t d = feature_dim();
        out.features = Tensor::zeros({idx.size(), d});
        out.labels.reserve(idx.size());
        out.sensitive.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            for (std::size_t c = 0; c < d; ++c) out.features.at(r, c) = features.at(idx[r], c);
            out.labels.push_back(labels[idx[r]]);
            out.sensitive.push_back(sensitive[idx[r]]);
        }
        return out;
    }

    void validate() const {
        if (size() == 0) throw ContractError("dataset: empty");
        if (features.shape.size() != 2 || features.shape[0] != size() ||
            sensitive.size() != size())
            throw DimensionError("dataset: features " + features.shape_str() + ", " +
                                 std::to_string(labels.size()) + " labels, " +
                                 std::to_string(sensitive.size()) + " sensitive entries");
        ensure_finite(features, "dataset features");
    }
};

/// Encoder outputs paired with the targets needed for server-side training.
struct LatentDataset {
    Tensor latents;  // [n x 4]
    std::vector<int> labels;
    std::vector<int> sensitive;

    std::size_t size() const { return labels.size(); }
};

struct SplitSpec {
    double test_fraction = 0.30;
    double train_ratio = 9.0;
    double val_ratio = 1.0;
    std::uint64_t seed = 0;
};

struct Split {
    Dataset train, validation, test;
};

struct SplitIndices {
    std::vector<std::size_t> train, validation, test;
};

namespace detail {

inline int count_group(const std::vector<int>& vals, const std::vector<std::size_t>& idx,
                       int group) {
    int c = 0;
    for (std::size_t i : idx) c += vals[i] == group;
    return c;
}

/// Largest-remainder allocation of `target` slots across cells proportional
/// to `avail`; deterministic tie-break by cell index.
inline std::vector<std::size_t> largest_remainder(const std::vector<std::size_t>& avail,
                                                  std::size_t target) {
    std::size_t total = std::accumulate(avail.begin(), avail.end(), std::size_t{0});
    std::vector<std::size_t> take(avail.size(), 0);
    if (total == 0) return take;
    std::vector<std::pair<double, std::size_t>> rema;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < avail.size(); ++c) {
        double ideal = static_cast<double>(avail[c]) * static_cast<double>(target) /
                       static_cast<double>(total);
        take[c] = std::min(avail[c], static_cast<std::size_t>(ideal));
        assigned += take[c];
        rema.emplace_back(ideal - static_cast<double>(take[c]), c);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    for (const auto& [frac, c] : rema) {
        if (assigned >= target) break;
        if (take[c] < avail[c]) {
            ++take[c];
            ++assigned;
        }
    }
    // spill over if some cells saturated
    for (std::size_t c = 0; assigned < target && c < avail.size(); ++c) {
        while (take[c] < avail[c] && assigned < target) {
            ++take[c];
            ++assigned;
        }
    }
    return take;
}

inline bool split_has_group(const std::vector<int>& sensitive,
                            const std::vector<std::size_t>& idx, int group) {
    return count_group(sensitive, idx, group) > 0;
}

/// Apportion `total` slots proportionally to nonnegative weights, largest
/// remainder, deterministic tie-break by index.
inline std::vector<std::size_t> apportion(const std::vector<double>& weights, std::size_t total) {
    double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> out(weights.size(), 0);
    if (!(wsum > 0.0)) {
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = total / out.size() + (k < total % out.size() ? 1 : 0);
        return out;
    }
    std::size_t assigned = 0;
    std::vector<std::pair<double, std::size_t>> rema;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        double ideal = weights[k] / wsum * static_cast<double>(total);
        out[k] = static_cast<std::size_t>(ideal);
        assigned += out[k];
        rema.emplace_back(ideal - static_cast<double>(out[k]), k);
    }
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    for (const auto& [frac, k] : rema) {
        if (assigned >= total) break;
        ++out[k];
        ++assigned;
    }
    return out;
}

/// Move one sample of `group` from a donor split into `needy`, swapping a
/// non-group sample back so sizes stay exact.
inline bool fixup_group_presence(const std::vector<int>& sensitive,
                                 std::vector<std::size_t>& needy,
                                 std::vector<std::size_t>& donor, int group) {
    if (count_group(sensitive, donor, group) < 2) return false;
    auto it_donor = std::find_if(donor.begin(), donor.end(),
                                 [&](std::size_t i) { return sensitive[i] == group; });
    auto it_needy = std::find_if(needy.begin(), needy.end(),
                                 [&](std::size_t i) { return sensitive[i] != group; });
    if (it_donor == donor.end() || it_needy == needy.end()) return false;
    std::swap(*it_donor, *it_needy);
    return true;
}

}  // namespace detail

/**
 * Stratified 30% / 63% / 7% split (test, then 9:1 train:validation), within
 * one sample of the targets. Stratifies by (label, sensitive) and guarantees
 * both sensitive groups appear in every split so that the fairness loss and
 * DP disparity stay defined everywhere.
 */
inline SplitIndices split_indices(const Dataset& ds, const SplitSpec& spec) {
    ds.validate();
    if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0))
        throw ContractError("split: test fraction must lie in (0,1)");
    if (!(spec.train_ratio > 0.0 && spec.val_ratio > 0.0))
        throw ContractError("split: ratio components must be positive");
    std::size_t n = ds.size();
    auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * spec.test_fraction));
    std::size_t rest = n - n_test;
    auto n_val = static_cast<std::size_t>(std::lround(
        static_cast<double>(rest) * spec.val_ratio / (spec.train_ratio + spec.val_ratio)));
    std::size_t n_train = rest - n_val;
    if (n_test == 0 || n_val == 0 || n_train == 0)
        throw ContractError("split: dataset too small for non-empty train/validation/test");

    for (int attempt = 0; attempt < 100; ++attempt) {
        auto rng = make_stream(spec.seed, Stream::split, static_cast<std::uint64_t>(attempt));
        // cells keyed by (label, sensitive)
        std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
        for (std::size_t i = 0; i < n; ++i) cells[{ds.labels[i], ds.sensitive[i]}].push_back(i);
        std::vector<std::vector<std::size_t>> cell_idx;
        for (auto& [key, idx] : cells) {
            std::shuffle(idx.begin(), idx.end(), rng);
            cell_idx.push_back(idx);
        }
        std::vector<std::size_t> sizes;
        for (const auto& c : cell_idx) sizes.push_back(c.size());

        std::vector<std::size_t> take_test = detail::largest_remainder(sizes, n_test);
        std::vector<std::size_t> remaining = sizes;
        for (std::size_t c = 0; c < sizes.size(); ++c) remaining[c] -= take_test[c];
        std::vector<std::size_t> take_train = detail::largest_remainder(remaining, n_train);

        SplitIndices out;
        for (std::size_t c = 0; c < cell_idx.size(); ++c) {
            const auto& idx = cell_idx[c];
            std::size_t a = take_test[c], b = a + take_train[c];
            out.test.insert(out.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(a));
            out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(a),
                             idx.begin() + static_cast<std::ptrdiff_t>(b));
            out.validation.insert(out.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(b),
                                  idx.end());
        }

        std::vector<std::vector<std::size_t>*> splits = {&out.train, &out.validation, &out.test};
        bool ok = true;
        for (int group : {0, 1}) {
            for (auto* s : splits) {
                if (detail::split_has_group(ds.sensitive, *s, group)) continue;
                bool fixed = false;
                for (auto* donor : splits) {
                    if (donor == s) continue;
                    if (detail::fixup_group_presence(ds.sensitive, *s, *donor, group)) {
                        fixed = true;
                        break;
                    }
                }
                if (!fixed) ok = false;
            }
        }
        if (ok) {
            std::sort(out.train.begin(), out.train.end());
            std::sort(out.validation.begin(), out.validation.end());
            std::sort(out.test.begin(), out.test.end());
            return out;
        }
    }
    throw ContractError("split: stratification failed, a sensitive group cannot be represented "
                        "in every split after 100 attempts");
}

inline Split split(const Dataset& ds, const SplitSpec& spec) {
    SplitIndices idx = split_indices(ds, spec);
    return Split{ds.subset(idx.train), ds.subset(idx.validation), ds.subset(idx.test)};
}

/**
 * Heterogeneous client partition: per label class, proportions over the K
 * clients are drawn from a symmetric Dirichlet(concentration). Every client
 * must end up with >= 20 samples, both label classes, and at least 3 samples
 * of each sensitive group (so its own splits keep both groups); otherwise
 * proportions are redrawn, up to 100 times.
 */
inline std::vector<std::vector<std::size_t>> partition_dirichlet_indices(const Dataset& ds,
                                                                         std::size_t clients,
                                                                         double concentration,
                                                                         std::uint64_t seed) {
    ds.validate();
    if (clients < 2) throw ContractError("partition: need at least 2 clients");
    if (!(concentration > 0.0)) throw ContractError("partition: concentration must be positive");

    std::vector<std::vector<std::size_t>> by_class(2);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    auto rng = make_stream(seed, Stream::data, 0x70617274ULL);
    std::gamma_distribution<double> gamma(concentration, 1.0);

    for (int attempt = 0; attempt < 100; ++attempt) {
        std::vector<std::vector<std::size_t>> assign(clients);
        for (auto& idx : by_class) {
            if (idx.empty()) continue;
            std::shuffle(idx.begin(), idx.end(), rng);
            std::vector<double> prop(clients);
            for (double& p : prop) p = gamma(rng);
            std::vector<std::size_t> want = detail::apportion(prop, idx.size());
            std::size_t cursor = 0;
            for (std::size_t k = 0; k < clients; ++k) {
                for (std::size_t j = 0; j < want[k] && cursor < idx.size(); ++j)
                    assign[k].push_back(idx[cursor++]);
            }
        }

        bool ok = true;
        for (const auto& idx : assign) {
            if (idx.size() < 20) ok = false;
            for (int cls : {0, 1})
                if (detail::count_group(ds.labels, idx, cls) < 1) ok = false;
            for (int grp : {0, 1})
                if (detail::count_group(ds.sensitive, idx, grp) < 3) ok = false;
        }
        if (ok) {
            for (auto& idx : assign) std::sort(idx.begin(), idx.end());
            return assign;
        }
    }
    throw ContractError("partition: constraints (>= 20 samples, both labels, both sensitive "
                        "groups per client) unsatisfiable after 100 redraws");
}

inline std::vector<Dataset> partition_dirichlet(const Dataset& ds, std::size_t clients,
                                                double concentration, std::uint64_t seed) {
    std::vector<Dataset> out;
    for (const auto& idx : partition_dirichlet_indices(ds, clients, concentration, seed))
        out.push_back(ds.subset(idx));
    return out;
}

/**
 * Synthetic two-feature benchmark. Labels are balanced; the sensitive
 * attribute follows P(a=1 | y=1) = 0.7 and P(a=1 | y=0) = 0.3 (correlation
 * 0.4 with the label). Features are drawn from isotropic Gaussians
 * (sigma = 0.8) centered at (-1,-1) for y=0 and (1,1) for y=1, with the
 * sensitive attribute shifting the first coordinate by +-0.5. Since the
 * label correlates with the sensitive attribute, an accurate classifier
 * carries a demographic-parity gap near 0.4, so accuracy and parity
 * genuinely compete. The pooled samples are partitioned across clients by
 * partition_dirichlet.
 */
inline Dataset generate_synthetic_pool(std::size_t n, std::uint64_t seed) {
    if (n < 8) throw ContractError("synthetic: need at least 8 samples");
    auto rng = make_stream(seed, Stream::data, 0x73796e74ULL);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> gauss(0.0, 0.8);
    Dataset ds;
    ds.features = Tensor::zeros({n, 2});
    ds.labels.resize(n);
    ds.sensitive.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        int y = coin(rng) ? 1 : 0;
        std::bernoulli_distribution group(y ? 0.7 : 0.3);
        int a = group(rng) ? 1 : 0;
        double cx = (y ? 0.5 : -0.5) + (a ? 0.5 : -0.5);
        double cy = y ? 0.5 : -0.5;
        ds.features.at(i, 0) = cx + gauss(rng);
        ds.features.at(i, 1) = cy + gauss(rng);
        ds.labels[i] = y;
        ds.sensitive[i] = a;
    }
    return ds;
}

inline std::vector<Dataset> generate_synthetic(std::size_t n, std::size_t clients,
                                               double heterogeneity, std::uint64_t seed) {
    if (clients < 2) throw ContractError("synthetic: need at least 2 clients");
    if (n < 100 * clients) throw ContractError("synthetic: need at least 100 samples per client");
    if (!(heterogeneity > 0.0)) throw ContractError("synthetic: heterogeneity must be positive");
    Dataset pool = generate_synthetic_pool(n, seed);
    return partition_dirichlet(pool, clients, heterogeneity, seed);
}

// ---------------------------------------------------------------------------
// CSV ingestion.
// ---------------------------------------------------------------------------

/// Declared column roles for a CSV file. Columns named under `categorical`
/// are one-hot encoded over the declared category list; all other feature
/// columns must parse as numbers.
struct CsvSchema {
    std::string label_column;
    std::string label_positive;
    std::string sensitive_column;
    std::string sensitive_positive;
    std::vector<std::string> feature_columns;
    std::map<std::string, std::vector<std::string>> categorical;

    static CsvSchema from_json(const nlohmann::json& j) {
        CsvSchema s;
        try {
            s.label_column = j.at("label").at("column").get<std::string>();
            s.label_positive = j.at("label").at("positive").get<std::string>();
            s.sensitive_column = j.at("sensitive").at("column").get<std::string>();
            s.sensitive_positive = j.at("sensitive").at("positive").get<std::string>();
            s.feature_columns = j.at("features").get<std::vector<std::string>>();
            if (j.contains("categorical"))
                s.categorical =
                    j.at("categorical").get<std::map<std::string, std::vector<std::string>>>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(std::string("schema document: ") + e.what());
        }
        if (s.feature_columns.empty()) throw SchemaError("schema: no feature columns declared");
        return s;
    }

    static CsvSchema load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw SchemaError("schema file not found: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("schema file " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

namespace detail {

/// Minimal CSV row tokenizer: comma separated, double quotes with ""
/// escaping.
inline std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline bool missing_cell(const std::string& s) { return s.empty() || s == "?"; }

}  // namespace detail

/**
 * Load a CSV file per the declared schema. Label and sensitive cells are
 * binarized against their declared positive value; feature columns are
 * standardized to zero mean / unit variance (population convention) over the
 * file. Rows with missing cells in any used column are rejected; constant
 * feature columns are scaled to zero with a warning record.
 */
inline Dataset load_csv(const std::string& path, const CsvSchema& schema,
                        std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("csv file not found: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv file " + path + ": missing header row");
    std::vector<std::string> header = detail::csv_fields(line);
    for (auto& h : header) h = detail::trim(h);

    auto column_index = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw SchemaError("csv file " + path + ": declared column '" + name +
                              "' not found in header");
        return static_cast<std::size_t>(it - header.begin());
    };

    std::size_t label_at = column_index(schema.label_column);
    std::size_t sens_at = column_index(schema.sensitive_column);
    struct FeatCol {
        std::string name;
        std::size_t at;
        const std::vector<std::string>* categories;  // null for numeric
    };
    std::vector<FeatCol> feats;
    std::size_t width = 0;
    for (const auto& name : schema.feature_columns) {
        auto cat = schema.categorical.find(name);
        const std::vector<std::string>* cats =
            cat == schema.categorical.end() ? nullptr : &cat->second;
        feats.push_back({name, column_index(name), cats});
        width += cats ? cats->size() : 1;
    }

    std::vector<std::vector<double>> rows;
    std::vector<int> labels, sensitive;
    std::size_t rejected = 0;
    std::size_t row_no = 1;  // header was row 1
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty()) continue;
        std::vector<std::string> cells = detail::csv_fields(line);
        if (cells.size() != header.size())
            throw ParseError("csv row " + std::to_string(row_no) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        for (auto& c : cells) c = detail::trim(c);

        bool skip = detail::missing_cell(cells[label_at]) || detail::missing_cell(cells[sens_at]);
        for (const auto& f : feats) skip = skip || detail::missing_cell(cells[f.at]);
        if (skip) {
            ++rejected;
            continue;
        }

        std::vector<double> row;
        row.reserve(width);
        for (const auto& f : feats) {
            const std::string& cell = cells[f.at];
            if (f.categories) {
                auto it = std::find(f.categories->begin(), f.categories->end(), cell);
                if (it == f.categories->end())
                    throw ParseError("csv row " + std::to_string(row_no) + ": value '" + cell +
                                     "' not in declared categories of column '" + f.name + "'");
                for (std::size_t c = 0; c < f.categories->size(); ++c)
                    row.push_back(it - f.categories->begin() == static_cast<std::ptrdiff_t>(c)
                                      ? 1.0
                                      : 0.0);
            } else {
                try {
                    std::size_t used = 0;
                    double v = std::stod(cell, &used);
                    if (used != cell.size()) throw std::invalid_argument(cell);
                    row.push_back(v);
                } catch (const std::exception&) {
                    throw ParseError("csv row " + std::to_string(row_no) +
                                     ": non-numeric value '" + cell + "' in feature column '" +
                                     f.name + "'");
                }
            }
        }
        rows.push_back(std::move(row));
        labels.push_back(cells[label_at] == schema.label_positive ? 1 : 0);
        sensitive.push_back(cells[sens_at] == schema.sensitive_positive ? 1 : 0);
    }
    if (rows.empty()) throw ParseError("csv file " + path + ": no usable data rows");
    if (rejected && warnings)
        warnings->push_back("rejected " + std::to_string(rejected) +
                            " rows with missing cells in " + path);

    std::size_t n = rows.size();
    Tensor features = Tensor::zeros({n, width});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < width; ++c) features.at(i, c) = rows[i][c];

    // standardize each column (population variance); constant columns go to 0
    for (std::size_t c = 0; c < width; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += features.at(i, c);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = features.at(i, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        if (var <= 0.0) {
            for (std::size_t i = 0; i < n; ++i) features.at(i, c) = 0.0;
            if (warnings)
                warnings->push_back("feature column " + std::to_string(c) +
                                    " is constant; scaled to 0");
            continue;
        }
        double sd = std::sqrt(var);
        for (std::size_t i = 0; i < n; ++i) features.at(i, c) = (features.at(i, c) - mean) / sd;
    }

    Dataset ds{std::move(features), std::move(labels), std::move(sensitive)};
    ds.validate();
    return ds;
}

}  // namespace hetpfl

// pipeline.hpp
//
// Cross-validated end-to-end run: per fold, subsample -> kNN -> Leiden ->
// centroids on training tiles, assignment of all fold tiles, compositions,
// Cox and L1-logistic fits, evaluation on the held-out patients.
#pragma once

#include <phenoatlas/atlas.hpp>
#include <phenoatlas/cohort_io.hpp>
#include <phenoatlas/common.hpp>
#include <phenoatlas/composition.hpp>
#include <phenoatlas/cox.hpp>
#include <phenoatlas/evaluation.hpp>
#include <phenoatlas/knn_graph.hpp>
#include <phenoatlas/leiden.hpp>
#include <phenoatlas/logistic.hpp>
#include <phenoatlas/survival_curves.hpp>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace phenoatlas {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

/// Default seed: PHENOATLAS_SEED if set and numeric, otherwise 0.
inline std::uint64_t default_seed() {
    if (const char* env = std::getenv("PHENOATLAS_SEED")) {
        if (auto v = detail::parse_number<std::uint64_t>(env)) return *v;
        throw ValidationError(std::string("PHENOATLAS_SEED is not an unsigned integer: ") + env);
    }
    return 0;
}

inline std::vector<double> default_lambda_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(std::pow(10.0, -4.0 + 0.5 * i));
    return grid;
}

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t k = 250;
    double gamma = 3.0;
    std::size_t subsample = 250000;
    std::size_t n_folds = 5;
    std::optional<double> delta;  // unset: 0.5 / max(tiles, clusters)
    std::vector<double> lambda_grid = default_lambda_grid();
    std::size_t inner_folds = 3;
    double ridge = 1e-6;
    survival::Ties ties = survival::Ties::Efron;
    unsigned jobs = 1;
    std::size_t bootstrap = 1000;
    std::size_t permutations = 0;  // 0 disables permutation p-values
    bool patient_level_auc = false;
    bool km_pool_fold0 = false;
    bool stratify_folds = true;
    bool normalize = false;
    int leiden_max_iterations = 100;

    std::string embeddings;
    EmbeddingFormat embeddings_format = EmbeddingFormat::Csv;
    std::string metadata;
    std::string out = "runs";
    std::string run_id;  // empty: derived from the config

    void validate() const {
        if (k == 0) throw ValidationError("k must be positive");
        if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
        if (subsample == 0) throw ValidationError("subsample must be positive");
        if (n_folds < 2) throw ValidationError("need at least two folds");
        if (delta && !(*delta > 0.0)) throw ValidationError("delta must be positive");
        if (lambda_grid.empty()) throw ValidationError("empty lambda grid");
        for (double l : lambda_grid)
            if (!(l >= 0.0)) throw ValidationError("lambda grid values must be non-negative");
        if (ridge < 0.0) throw ValidationError("ridge must be non-negative");
        if (bootstrap != 0 && bootstrap < 100) throw ValidationError("bootstrap needs at least 100 resamples");
        if (permutations != 0 && permutations < 100) throw ValidationError("permutation test needs at least 100 permutations");
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["k"] = c.k;
    j["gamma"] = c.gamma;
    j["subsample"] = c.subsample;
    j["n_folds"] = c.n_folds;
    j["delta"] = c.delta ? nlohmann::json(*c.delta) : nlohmann::json("auto");
    j["lambda_grid"] = c.lambda_grid;
    j["inner_folds"] = c.inner_folds;
    j["ridge"] = c.ridge;
    j["ties"] = c.ties == survival::Ties::Efron ? "efron" : "breslow";
    j["jobs"] = c.jobs;
    j["bootstrap"] = c.bootstrap;
    j["permutations"] = c.permutations;
    j["patient_level_auc"] = c.patient_level_auc;
    j["km_pool_fold0"] = c.km_pool_fold0;
    j["stratify_folds"] = c.stratify_folds;
    j["normalize"] = c.normalize;
    j["leiden_max_iterations"] = c.leiden_max_iterations;
    j["embeddings"] = c.embeddings;
    j["embeddings_format"] = c.embeddings_format == EmbeddingFormat::Csv ? "csv" : "binary";
    j["metadata"] = c.metadata;
    j["out"] = c.out;
    j["run_id"] = c.run_id;
    return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        c.k = j.at("k").get<std::size_t>();
        c.gamma = j.at("gamma").get<double>();
        c.subsample = j.at("subsample").get<std::size_t>();
        c.n_folds = j.at("n_folds").get<std::size_t>();
        if (j.at("delta").is_number()) c.delta = j.at("delta").get<double>();
        c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
        c.inner_folds = j.at("inner_folds").get<std::size_t>();
        c.ridge = j.at("ridge").get<double>();
        c.ties = j.at("ties").get<std::string>() == "breslow" ? survival::Ties::Breslow : survival::Ties::Efron;
        c.jobs = j.at("jobs").get<unsigned>();
        c.bootstrap = j.at("bootstrap").get<std::size_t>();
        c.permutations = j.at("permutations").get<std::size_t>();
        c.patient_level_auc = j.at("patient_level_auc").get<bool>();
        c.km_pool_fold0 = j.at("km_pool_fold0").get<bool>();
        c.stratify_folds = j.at("stratify_folds").get<bool>();
        c.normalize = j.at("normalize").get<bool>();
        c.leiden_max_iterations = j.at("leiden_max_iterations").get<int>();
        c.embeddings = j.at("embeddings").get<std::string>();
        c.embeddings_format =
            j.at("embeddings_format").get<std::string>() == "binary" ? EmbeddingFormat::Binary : EmbeddingFormat::Csv;
        c.metadata = j.at("metadata").get<std::string>();
        c.out = j.at("out").get<std::string>();
        c.run_id = j.at("run_id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed run config: ") + e.what());
    }
    return c;
}

/// Run id derived from every field that affects results (jobs, out and run_id excluded).
inline std::string derived_run_id(const RunConfig& c) {
    auto j = to_json(c);
    j.erase("jobs");
    j.erase("out");
    j.erase("run_id");
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%016llx",
                  static_cast<unsigned long long>(derive_seed(0, std::string_view(j.dump()))));
    return buf;
}

// ---------------------------------------------------------------------------
// Per-fold execution

/// Metric values for one fold; nullopt where undefined.
struct FoldResult {
    int fold = 0;
    std::size_t train_patients = 0;
    std::size_t test_patients = 0;
    std::size_t subsample_tiles = 0;
    std::size_t k_used = 0;
    std::size_t clusters = 0;
    double modularity = 0.0;
    double lambda = 0.0;
    std::map<std::string, std::optional<double>> metrics;
    std::map<std::string, std::optional<eval::Interval>> ci95;
    std::map<std::string, std::optional<double>> permutation_p;
    std::optional<double> logrank_p;
    std::optional<double> logrank_p_pooled;
    std::map<std::string, std::uint64_t> seeds;
    std::vector<std::string> artifacts;  // relative to the fold directory
};

namespace detail {

inline std::string fold_dir_name(std::size_t f) { return "fold" + std::to_string(f); }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << text;
    if (!os) throw Error("write failed: " + path.string());
}

inline std::string km_csv_text(const survival::KMCurve& km) {
    std::ostringstream os;
    survival::write_km_csv(os, km);
    return os.str();
}

inline std::vector<std::string> hpc_names(std::size_t c) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < c; ++j) names.push_back("hpc_" + std::to_string(j));
    return names;
}

struct StageGuard {
    int fold;
    const char* stage = "setup";
    [[noreturn]] void rethrow(const std::exception& e) const {
        const std::string msg = "fold " + std::to_string(fold) + ", stage " + stage + ": " + e.what();
        if (dynamic_cast<const ProvenanceError*>(&e)) throw ProvenanceError(msg);
        if (dynamic_cast<const FormatError*>(&e)) throw FormatError(msg);
        if (dynamic_cast<const ValidationError*>(&e)) throw ValidationError(msg);
        throw Error(msg);
    }
};

}  // namespace detail

/// Runs one fold. The atlas is fitted on the fold's training tiles and its
/// provenance is checked against the test patients before anything is scored.
/// When `dir` is non-empty, fold artifacts are written there.
inline FoldResult run_fold(const EmbeddingSet& emb, const CohortMetadata& meta, const eval::Fold& fold, int fold_index,
                           const RunConfig& cfg, const std::filesystem::path& dir = {}) {
    namespace fs = std::filesystem;
    FoldResult r;
    r.fold = fold_index;
    r.train_patients = fold.train.size();
    r.test_patients = fold.test.size();
    const std::uint64_t fold_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(fold_index));
    for (const char* tag : {"subsample", "leiden", "lambda", "bootstrap", "permutation"})
        r.seeds[tag] = derive_seed(fold_seed, std::string_view(tag));
    const bool write = !dir.empty();
    if (write) fs::create_directories(dir);
    auto emit = [&](const std::string& name, const std::string& text) {
        detail::write_text(dir / name, text);
        r.artifacts.push_back(name);
    };

    detail::StageGuard guard{fold_index};
    try {
        guard.stage = "split";
        const std::set<std::string> train_set(fold.train.begin(), fold.train.end());
        const std::set<std::string> test_set(fold.test.begin(), fold.test.end());
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < emb.size(); ++i) {
            if (train_set.count(emb.patient_ids[i])) train_rows.push_back(i);
            if (test_set.count(emb.patient_ids[i])) test_rows.push_back(i);
        }
        if (train_rows.size() < 2) throw ValidationError("fewer than two training tiles");
        if (test_rows.empty()) throw ValidationError("no test tiles");
        const EmbeddingSet train = emb.select(train_rows);

        guard.stage = "subsample";
        const std::size_t m = std::min(cfg.subsample, train.size());
        const auto sub_idx = subsample_indices(train.size(), m, r.seeds["subsample"]);
        const EmbeddingSet sub = train.select(sub_idx);
        r.subsample_tiles = sub.size();

        guard.stage = "knn";
        r.k_used = std::min(cfg.k, sub.size() - 1);
        const auto graph = build_knn(sub, r.k_used, 1);

        guard.stage = "leiden";
        LeidenOptions lopt;
        lopt.gamma = cfg.gamma;
        lopt.seed = r.seeds["leiden"];
        lopt.max_iterations = cfg.leiden_max_iterations;
        const auto partition = leiden_cluster(graph, lopt);
        r.clusters = partition.count;
        r.modularity = partition.quality;

        guard.stage = "atlas";
        AtlasProvenance prov{cfg.seed, r.k_used, cfg.gamma, cfg.subsample, fold_index, {}};
        AtlasModel atlas = fit_centroids(sub, partition, prov);
        // the atlas belongs to the whole training side of the fold, not only the subsample
        atlas.provenance.training_patients.assign(train_set.begin(), train_set.end());
        atlas.check_not_trained_on(fold.test);

        guard.stage = "assign";
        const EmbeddingSet test = emb.select(test_rows);
        const auto train_map = assign(atlas, train, 1);
        const auto test_map = assign(atlas, test, 1);

        guard.stage = "compose";
        const DeltaPolicy policy{cfg.delta};
        const auto train_pat = compose(cluster_counts(train_map, train, atlas.clusters, Grouping::Patient), policy);
        const auto test_pat = compose(cluster_counts(test_map, test, atlas.clusters, Grouping::Patient), policy);
        const auto train_slide = compose(cluster_counts(train_map, train, atlas.clusters, Grouping::Slide), policy);
        const auto test_slide = compose(cluster_counts(test_map, test, atlas.clusters, Grouping::Slide), policy);

        std::unordered_map<std::string, std::string> patient_of_slide;
        for (std::size_t i = 0; i < emb.size(); ++i) patient_of_slide.emplace(emb.slide_ids[i], emb.patient_ids[i]);

        if (write) {
            std::ostringstream os;
            write_partition_csv(os, sub.tile_ids, partition);
            emit("partition.csv", os.str());
            std::ostringstream atlas_os;
            write_atlas(atlas_os, atlas);
            emit("atlas.pha", atlas_os.str());
            std::ostringstream as;
            write_assignment_csv(as, train.tile_ids, train_map);
            std::ostringstream at;
            write_assignment_csv(at, test.tile_ids, test_map);
            emit("assign_train.csv", as.str());
            emit("assign_test.csv", at.str());
            std::ostringstream fp_train, fp_test;
            write_feature_csv(fp_train, train_pat.entity_ids, train_pat.clr_x);
            write_feature_csv(fp_test, test_pat.entity_ids, test_pat.clr_x);
            emit("features_patient_train.csv", fp_train.str());
            emit("features_patient_test.csv", fp_test.str());
        }

        // survival side
        guard.stage = "cox";
        auto survival_rows = [&](const CompositionMatrix& comp) {
            survival::SurvivalDataset d;
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < comp.entity_ids.size(); ++i) {
                const auto& rec = meta.at(comp.entity_ids[i]);
                if (!rec.time) continue;
                keep.push_back(i);
                d.time.push_back(*rec.time);
                d.event.push_back(*rec.event);
            }
            d.x = comp.clr_x.select_rows(keep);
            std::vector<std::string> ids;
            for (auto i : keep) ids.push_back(comp.entity_ids[i]);
            return std::pair{std::move(d), std::move(ids)};
        };
        const auto [surv_train, surv_train_ids] = survival_rows(train_pat);
        const auto [surv_test, surv_test_ids] = survival_rows(test_pat);
        survival::CoxOptions copt;
        copt.ridge = cfg.ridge;
        copt.ties = cfg.ties;
        const auto cox = survival::fit_cox(surv_train, copt);
        const auto test_risk = survival::risk_scores(cox, surv_test.x);
        if (write) emit("cox.json", survival::to_json(cox, detail::hpc_names(atlas.clusters)).dump(2) + "\n");

        guard.stage = "c-index";
        std::optional<double> cidx;
        try {
            cidx = eval::c_index(surv_test.time, surv_test.event, test_risk);
        } catch (const ValidationError&) {
        }
        r.metrics["c_index"] = cidx;
        if (cidx && cfg.bootstrap) {
            auto metric = [&](std::span<const std::size_t> idx) -> std::optional<double> {
                std::vector<double> t, s;
                std::vector<int> e;
                for (auto i : idx) {
                    t.push_back(surv_test.time[i]);
                    e.push_back(surv_test.event[i]);
                    s.push_back(test_risk[i]);
                }
                try {
                    return eval::c_index(t, e, s);
                } catch (const ValidationError&) {
                    return std::nullopt;
                }
            };
            try {
                r.ci95["c_index"] = eval::bootstrap_ci(metric, surv_test.size(), cfg.bootstrap, r.seeds["bootstrap"]);
            } catch (const ValidationError&) {
                r.ci95["c_index"] = std::nullopt;
            }
        }
        if (cidx && cfg.permutations) {
            auto metric = [&](std::span<const std::size_t> perm) {
                std::vector<double> t;
                std::vector<int> e;
                for (auto i : perm) {
                    t.push_back(surv_test.time[i]);
                    e.push_back(surv_test.event[i]);
                }
                try {
                    return eval::c_index(t, e, test_risk);
                } catch (const ValidationError&) {
                    return 0.5;
                }
            };
            r.permutation_p["c_index"] =
                eval::permutation_test(metric, surv_test.size(), cfg.permutations, r.seeds["permutation"]);
        }

        guard.stage = "km";
        auto km_split = [&](std::span<const double> time, std::span<const int> event, std::span<const double> risk,
                            const std::string& stem) -> std::optional<double> {
            if (risk.size() < 2) return std::nullopt;
            const auto groups = survival::stratify_median(risk);
            std::vector<double> th, tl;
            std::vector<int> eh, el;
            for (std::size_t i = 0; i < risk.size(); ++i) {
                if (groups[i] == survival::RiskGroup::High) {
                    th.push_back(time[i]);
                    eh.push_back(event[i]);
                } else {
                    tl.push_back(time[i]);
                    el.push_back(event[i]);
                }
            }
            if (th.empty() || tl.empty()) return std::nullopt;
            const auto lr = survival::logrank_test(th, eh, tl, el);
            const auto kh = survival::kaplan_meier(th, eh), kl = survival::kaplan_meier(tl, el);
            if (write) {
                emit(stem + "_high.csv", detail::km_csv_text(kh));
                emit(stem + "_low.csv", detail::km_csv_text(kl));
                const std::vector<survival::NamedCurve> curves{{"high risk", kh}, {"low risk", kl}};
                emit(stem + ".svg", survival::km_svg(curves, "log-rank p = " + survival::format_p(lr.p)));
            }
            return lr.p;
        };
        r.logrank_p = km_split(surv_test.time, surv_test.event, test_risk, "km");
        if (cfg.km_pool_fold0 && fold_index == 0) {
            std::vector<double> t(surv_train.time), s = survival::risk_scores(cox, surv_train.x);
            std::vector<int> e(surv_train.event);
            t.insert(t.end(), surv_test.time.begin(), surv_test.time.end());
            e.insert(e.end(), surv_test.event.begin(), surv_test.event.end());
            s.insert(s.end(), test_risk.begin(), test_risk.end());
            r.logrank_p_pooled = km_split(t, e, s, "km_pooled");
        }

        // subtype side: slide-level rows carry their patient's label
        guard.stage = "logistic";
        auto labelled = [&](const CompositionMatrix& comp) {
            std::vector<std::size_t> keep;
            std::vector<int> y;
            std::vector<std::string> groups;
            for (std::size_t i = 0; i < comp.entity_ids.size(); ++i) {
                const auto& patient = patient_of_slide.at(comp.entity_ids[i]);
                const auto& rec = meta.at(patient);
                if (!rec.subtype_label) continue;
                keep.push_back(i);
                y.push_back(*rec.subtype_label);
                groups.push_back(patient);
            }
            return std::tuple{comp.clr_x.select_rows(keep), std::move(y), std::move(groups)};
        };
        const auto [x_tr, y_tr, g_tr] = labelled(train_slide);
        const auto [x_te, y_te, g_te] = labelled(test_slide);
        r.lambda = eval::select_lambda(x_tr, y_tr, g_tr, cfg.lambda_grid, cfg.inner_folds, r.seeds["lambda"]);
        const auto logit = logistic::fit_logistic(x_tr, y_tr, r.lambda);
        if (write) emit("logistic.json", logistic::to_json(logit).dump(2) + "\n");

        guard.stage = "classification metrics";
        std::vector<double> prob = logistic::predict_proba(logit, x_te);
        std::vector<int> labels = y_te;
        std::vector<std::string> units = g_te;  // bootstrap / permutation unit per row
        if (cfg.patient_level_auc) {
            std::map<std::string, std::pair<double, std::size_t>> acc;
            std::map<std::string, int> lab;
            for (std::size_t i = 0; i < prob.size(); ++i) {
                acc[g_te[i]].first += prob[i];
                ++acc[g_te[i]].second;
                lab[g_te[i]] = y_te[i];
            }
            prob.clear();
            labels.clear();
            units.clear();
            for (const auto& [p, s] : acc) {
                prob.push_back(s.first / static_cast<double>(s.second));
                labels.push_back(lab[p]);
                units.push_back(p);
            }
        }
        const bool both = std::count(labels.begin(), labels.end(), 1) > 0 &&
                          std::count(labels.begin(), labels.end(), 0) > 0;
        std::optional<double> auc;
        if (both) auc = eval::roc_auc(labels, prob);
        r.metrics["auc"] = auc;
        if (!labels.empty()) {
            const auto cm = eval::classification_metrics(labels, prob);
            r.metrics["accuracy"] = cm.accuracy;
            r.metrics["precision"] = cm.precision;
            r.metrics["recall"] = cm.recall;
            r.metrics["f1"] = cm.f1;
        }
        if (auc && cfg.bootstrap) {
            std::vector<std::string> unit_ids = unique_in_order(units);
            std::unordered_map<std::string, std::vector<std::size_t>> rows_of;
            for (std::size_t i = 0; i < units.size(); ++i) rows_of[units[i]].push_back(i);
            auto metric = [&](std::span<const std::size_t> idx) -> std::optional<double> {
                std::vector<int> l;
                std::vector<double> s;
                for (auto u : idx)
                    for (auto i : rows_of[unit_ids[u]]) {
                        l.push_back(labels[i]);
                        s.push_back(prob[i]);
                    }
                if (std::count(l.begin(), l.end(), 1) == 0 || std::count(l.begin(), l.end(), 0) == 0)
                    return std::nullopt;
                return eval::roc_auc(l, s);
            };
            try {
                r.ci95["auc"] =
                    eval::bootstrap_ci(metric, unit_ids.size(), cfg.bootstrap, derive_seed(r.seeds["bootstrap"], 1));
            } catch (const ValidationError&) {
                r.ci95["auc"] = std::nullopt;
            }
        }
        if (auc && cfg.permutations) {
            auto metric = [&](std::span<const std::size_t> perm) {
                std::vector<int> l;
                for (auto i : perm) l.push_back(labels[i]);
                return eval::roc_auc(l, prob);
            };
            r.permutation_p["auc"] =
                eval::permutation_test(metric, labels.size(), cfg.permutations, derive_seed(r.seeds["permutation"], 1));
        }
    } catch (const std::exception& e) {
        guard.rethrow(e);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Reports

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"c_index", "auc", "accuracy", "precision", "recall", "f1"};
    return names;
}

inline nlohmann::json metrics_json(const std::vector<FoldResult>& folds) {
    auto num = [](std::optional<double> v) {
        return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& name : metric_names()) {
        std::vector<double> values;
        nlohmann::json ci = nlohmann::json::array(), perm = nlohmann::json::array();
        for (const auto& f : folds) {
            auto it = f.metrics.find(name);
            values.push_back(it != f.metrics.end() && it->second ? *it->second : std::nan(""));
            auto c = f.ci95.find(name);
            if (c != f.ci95.end() && c->second) ci.push_back({c->second->lo, c->second->hi});
            else ci.push_back(nullptr);
            auto p = f.permutation_p.find(name);
            perm.push_back(p != f.permutation_p.end() ? num(p->second) : nlohmann::json(nullptr));
        }
        auto m = to_json(eval::MetricSummary::of(values));
        m["ci95"] = ci;
        m["permutation_p"] = perm;
        metrics[name] = m;
    }
    j["metrics"] = metrics;
    nlohmann::json per = nlohmann::json::array();
    for (const auto& f : folds) {
        per.push_back({{"fold", f.fold},
                       {"train_patients", f.train_patients},
                       {"test_patients", f.test_patients},
                       {"subsample_tiles", f.subsample_tiles},
                       {"k", f.k_used},
                       {"clusters", f.clusters},
                       {"modularity", f.modularity},
                       {"lambda", f.lambda},
                       {"logrank_p", num(f.logrank_p)},
                       {"logrank_p_pooled", num(f.logrank_p_pooled)}});
    }
    j["folds"] = per;
    return j;
}

inline std::string metrics_csv(const std::vector<FoldResult>& folds) {
    auto cell = [](std::optional<double> v) { return v && std::isfinite(*v) ? detail::number_repr(*v) : std::string(); };
    std::ostringstream os;
    os << "metric,fold,value,ci_lo,ci_hi,permutation_p\n";
    for (const auto& name : metric_names()) {
        std::vector<double> values;
        for (const auto& f : folds) {
            std::optional<double> v, lo, hi, p;
            if (auto it = f.metrics.find(name); it != f.metrics.end()) v = it->second;
            if (auto it = f.ci95.find(name); it != f.ci95.end() && it->second) {
                lo = it->second->lo;
                hi = it->second->hi;
            }
            if (auto it = f.permutation_p.find(name); it != f.permutation_p.end()) p = it->second;
            values.push_back(v ? *v : std::nan(""));
            os << name << ',' << f.fold << ',' << cell(v) << ',' << cell(lo) << ',' << cell(hi) << ',' << cell(p)
               << '\n';
        }
        const auto s = eval::MetricSummary::of(values);
        os << name << ",mean," << cell(s.mean) << ",,,\n";
        os << name << ",sd," << cell(s.sd) << ",,,\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Whole run

struct RunResult {
    std::filesystem::path dir;
    eval::FoldPlan plan;
    std::vector<FoldResult> folds;
    nlohmann::json metrics;
};

/// Patient-wise fold plan over the patients present in `emb`, stratified by
/// subtype when every patient carries a label.
inline eval::FoldPlan plan_folds(const EmbeddingSet& emb, const CohortMetadata& meta, const RunConfig& cfg) {
    const auto patients = unique_in_order(emb.patient_ids);
    std::vector<int> labels;
    bool all_labelled = cfg.stratify_folds;
    for (const auto& p : patients) {
        const auto& rec = meta.at(p);
        if (!rec.subtype_label) all_labelled = false;
        else labels.push_back(*rec.subtype_label);
    }
    return eval::make_folds(patients, cfg.n_folds, derive_seed(cfg.seed, "folds"),
                            all_labelled ? std::span<const int>(labels) : std::span<const int>());
}

inline RunResult run_pipeline(const EmbeddingSet& emb, const CohortMetadata& meta, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();
    validate(emb);
    RunResult out;
    out.plan = plan_folds(emb, meta, cfg);
    out.plan.validate();
    const std::string run_id = cfg.run_id.empty() ? derived_run_id(cfg) : cfg.run_id;
    out.dir = fs::path(cfg.out) / run_id;
    fs::create_directories(out.dir);

    const std::size_t nf = out.plan.size();
    out.folds.resize(nf);
    std::vector<std::exception_ptr> errors(nf);
    auto work = [&](std::size_t f) {
        try {
            out.folds[f] = run_fold(emb, meta, out.plan.folds[f], static_cast<int>(f), cfg,
                                    out.dir / detail::fold_dir_name(f));
        } catch (...) {
            errors[f] = std::current_exception();
        }
    };
    const unsigned jobs = std::max(1u, cfg.jobs);
    if (jobs == 1) {
        for (std::size_t f = 0; f < nf; ++f) work(f);
    } else {
        // fold f runs on worker f % jobs; each fold owns its RNG streams and output directory
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs && t < nf; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t f = t; f < nf; f += jobs) work(f);
            });
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    out.metrics = metrics_json(out.folds);
    detail::write_text(out.dir / "metrics.json", out.metrics.dump(2) + "\n");
    detail::write_text(out.dir / "metrics.csv", metrics_csv(out.folds));

    nlohmann::json folds_json = nlohmann::json::array();
    for (std::size_t f = 0; f < nf; ++f) {
        std::vector<std::string> artifacts;
        for (const auto& a : out.folds[f].artifacts) artifacts.push_back(detail::fold_dir_name(f) + "/" + a);
        folds_json.push_back({{"fold", f},
                              {"train", out.plan.folds[f].train},
                              {"test", out.plan.folds[f].test},
                              {"seeds", out.folds[f].seeds},
                              {"artifacts", artifacts}});
    }
    RunConfig recorded = cfg;
    recorded.run_id = run_id;
    nlohmann::json manifest;
    manifest["schema_version"] = kSchemaVersion;
    manifest["versions"] = {{"phenoatlas", kVersion}, {"json", "nlohmann"}, {"cli", "CLI11"}};
    manifest["run_id"] = run_id;
    manifest["config"] = to_json(recorded);
    manifest["fold_plan_seed"] = out.plan.seed;
    manifest["folds"] = folds_json;
    manifest["artifacts"] = {"metrics.json", "metrics.csv"};

    // every declared artifact must exist and be non-empty before the manifest is written
    for (const auto& f : folds_json)
        for (const auto& a : f["artifacts"]) {
            const auto p = out.dir / a.get<std::string>();
            if (!fs::exists(p) || fs::file_size(p) == 0) throw Error("artifact missing or empty: " + p.string());
        }
    detail::write_text(out.dir / "manifest.json", manifest.dump(2) + "\n");
    return out;
}

/// Loads inputs named in the config and runs.
inline RunResult run_pipeline(const RunConfig& cfg) {
    const auto emb = load_embeddings(cfg.embeddings, cfg.embeddings_format, cfg.normalize);
    const auto meta = load_metadata(cfg.metadata);
    return run_pipeline(emb, meta, cfg);
}

inline RunConfig load_manifest_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed manifest: ") + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() > kSchemaVersion)
        throw FormatError("unsupported manifest schema version");
    return run_config_from_json(j.at("config"));
}

}  // namespace phenoatlas

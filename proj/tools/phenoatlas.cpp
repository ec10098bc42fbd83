// phenoatlas command-line driver.
#include <phenoatlas/phenoatlas.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace phenoatlas;

namespace {

EmbeddingFormat parse_format(const std::string& s) {
    if (s == "csv") return EmbeddingFormat::Csv;
    if (s == "binary" || s == "bin") return EmbeddingFormat::Binary;
    throw ValidationError("unknown embedding format '" + s + "' (csv|binary)");
}

EmbeddingFormat guess_format(const std::string& path, const std::string& flag) {
    if (!flag.empty()) return parse_format(flag);
    return fs::path(path).extension() == ".csv" ? EmbeddingFormat::Csv : EmbeddingFormat::Binary;
}

survival::Ties parse_ties(const std::string& s) {
    if (s == "efron") return survival::Ties::Efron;
    if (s == "breslow") return survival::Ties::Breslow;
    throw ValidationError("unknown tie method '" + s + "' (efron|breslow)");
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto v = detail::parse_number<double>(detail::trim(item));
        if (!v) throw ValidationError("not a number in list: '" + item + "'");
        out.push_back(*v);
    }
    return out;
}

std::string fmt(const char* f, double v) { return survival::format_fixed(f, v); }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    os << text;
}

std::string mean_sd(const nlohmann::json& m) {
    if (m["mean"].is_null()) return "n/a";
    const double sd = m["sd"].is_null() ? 0.0 : m["sd"].get<double>();
    return fmt("%.4f", m["mean"].get<double>()) + " ± " + fmt("%.4f", sd);
}

// Maps feature rows to metadata labels, directly by patient id or through the slide column of an embedding file.
std::vector<std::string> patients_of(const std::vector<std::string>& entities, const CohortMetadata& meta,
                                     const std::string& embeddings, const std::string& format) {
    std::unordered_map<std::string, std::string> slide_to_patient;
    if (!embeddings.empty()) {
        const auto emb = load_embeddings(embeddings, guess_format(embeddings, format));
        for (std::size_t i = 0; i < emb.size(); ++i) slide_to_patient.emplace(emb.slide_ids[i], emb.patient_ids[i]);
    }
    std::vector<std::string> out;
    for (const auto& e : entities) {
        if (meta.find(e)) out.push_back(e);
        else if (auto it = slide_to_patient.find(e); it != slide_to_patient.end()) out.push_back(it->second);
        else throw ValidationError("entity '" + e + "' is neither a patient in the metadata nor a known slide");
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Histomorphological phenotype atlas: clustering, compositions, survival and subtype models"};
    app.require_subcommand(1);

    // ingest
    std::string in_emb, in_fmt, in_meta, conv_out, conv_fmt = "binary";
    bool normalize = false;
    auto* ingest = app.add_subcommand("ingest", "Validate embeddings/metadata, optionally convert the embedding format");
    ingest->add_option("--embeddings", in_emb, "Embedding file (.csv or binary)")->required();
    ingest->add_option("--format", in_fmt, "csv|binary (default: by extension)");
    ingest->add_option("--metadata", in_meta, "Patient metadata CSV");
    ingest->add_flag("--normalize", normalize, "L2-normalize embeddings");
    ingest->add_option("--convert", conv_out, "Write the validated embeddings to this path");
    ingest->add_option("--convert-format", conv_fmt, "csv|binary");

    // synth
    synth::SynthSpec spec;
    std::string syn_out = "synthetic", syn_fmt = "csv", gamma_true, beta_true;
    std::optional<std::uint64_t> syn_seed;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cohort with planted truth");
    synth_cmd->add_option("--patients", spec.n_patients);
    synth_cmd->add_option("--slides", spec.slides_per_patient);
    synth_cmd->add_option("--tiles", spec.tiles_per_slide, "Tiles per slide");
    synth_cmd->add_option("--clusters", spec.c_true);
    synth_cmd->add_option("--dim", spec.dim);
    synth_cmd->add_option("--sigma", spec.blob_sigma);
    synth_cmd->add_option("--separation", spec.blob_separation);
    synth_cmd->add_option("--gamma-true", gamma_true, "Comma-separated planted log-hazard coefficients");
    synth_cmd->add_option("--beta-true", beta_true, "Comma-separated planted logistic coefficients");
    synth_cmd->add_option("--beta0", spec.beta0_true);
    synth_cmd->add_option("--censor-rate", spec.censor_rate);
    synth_cmd->add_option("--alpha", spec.dirichlet_alpha, "Dirichlet concentration");
    synth_cmd->add_option("--seed", syn_seed);
    synth_cmd->add_option("--format", syn_fmt, "csv|binary");
    synth_cmd->add_option("--out", syn_out, "Output directory");

    // cluster
    std::string cl_edges, cl_emb, cl_fmt, cl_out, cl_atlas;
    double cl_gamma = 3.0;
    std::size_t cl_k = 250, cl_sub = 250000;
    unsigned cl_jobs = 1;
    std::optional<std::uint64_t> cl_seed;
    auto* cluster = app.add_subcommand("cluster", "Leiden clustering of an edge list or of embeddings via kNN");
    auto* edges_opt = cluster->add_option("--edges", cl_edges, "Edge list CSV (src,dst[,weight])");
    auto* emb_opt = cluster->add_option("--embeddings", cl_emb, "Embedding file");
    edges_opt->excludes(emb_opt);
    cluster->add_option("--format", cl_fmt);
    cluster->add_option("--gamma", cl_gamma, "Resolution");
    cluster->add_option("--k", cl_k, "Neighbours per tile");
    cluster->add_option("--subsample", cl_sub, "Tiles drawn before graph construction");
    cluster->add_option("--seed", cl_seed);
    cluster->add_option("--jobs", cl_jobs);
    cluster->add_option("--out", cl_out, "Partition CSV");
    cluster->add_option("--atlas", cl_atlas, "Write centroids of the partition (embeddings input only)");

    // assign
    std::string as_atlas, as_emb, as_fmt, as_out;
    bool as_allow_train = false;
    unsigned as_jobs = 1;
    auto* assign_cmd = app.add_subcommand("assign", "Nearest-centroid assignment of tiles to an atlas");
    assign_cmd->add_option("--atlas", as_atlas)->required();
    assign_cmd->add_option("--embeddings", as_emb)->required();
    assign_cmd->add_option("--format", as_fmt);
    assign_cmd->add_option("--out", as_out, "Assignment CSV")->required();
    assign_cmd->add_option("--jobs", as_jobs);
    assign_cmd->add_flag("--allow-training-patients", as_allow_train,
                         "Permit scoring patients whose tiles built the atlas");

    // compose
    std::string co_assign, co_emb, co_fmt, co_out, co_group = "patient";
    std::optional<double> co_delta;
    std::size_t co_clusters = 0;
    auto* compose_cmd = app.add_subcommand("compose", "Counts -> multiplicative replacement -> CLR features");
    compose_cmd->add_option("--assignments", co_assign)->required();
    compose_cmd->add_option("--embeddings", co_emb, "Embedding file providing slide/patient ids")->required();
    compose_cmd->add_option("--format", co_fmt);
    compose_cmd->add_option("--clusters", co_clusters, "Cluster count (default: max id + 1)");
    compose_cmd->add_option("--group", co_group, "slide|patient");
    compose_cmd->add_option("--delta", co_delta, "Fixed replacement value");
    compose_cmd->add_option("--out", co_out, "Feature CSV")->required();

    // fit-cox
    std::string fc_feat, fc_meta, fc_out, fc_ties = "efron";
    double fc_ridge = 1e-6;
    auto* fit_cox_cmd = app.add_subcommand("fit-cox", "Cox proportional-hazards fit on patient features");
    fit_cox_cmd->add_option("--features", fc_feat)->required();
    fit_cox_cmd->add_option("--metadata", fc_meta)->required();
    fit_cox_cmd->add_option("--ridge", fc_ridge);
    fit_cox_cmd->add_option("--ties", fc_ties, "efron|breslow");
    fit_cox_cmd->add_option("--out", fc_out, "Model JSON");

    // fit-logit
    std::string fl_feat, fl_meta, fl_emb, fl_fmt, fl_out, fl_grid;
    std::optional<double> fl_lambda;
    std::size_t fl_boot = 0;
    std::optional<std::uint64_t> fl_seed;
    auto* fit_logit_cmd = app.add_subcommand("fit-logit", "L1 logistic regression for the subtype label");
    fit_logit_cmd->add_option("--features", fl_feat)->required();
    fit_logit_cmd->add_option("--metadata", fl_meta)->required();
    fit_logit_cmd->add_option("--embeddings", fl_emb, "Maps slide rows to patients");
    fit_logit_cmd->add_option("--format", fl_fmt);
    auto* lambda_opt = fit_logit_cmd->add_option("--lambda", fl_lambda, "Fixed L1 penalty");
    fit_logit_cmd->add_option("--lambda-grid", fl_grid, "Comma-separated grid for inner CV")->excludes(lambda_opt);
    fit_logit_cmd->add_option("--bootstrap", fl_boot, "Patient bootstrap resamples for coefficient intervals");
    fit_logit_cmd->add_option("--seed", fl_seed);
    fit_logit_cmd->add_option("--out", fl_out, "Model JSON");

    // evaluate
    RunConfig cfg;
    std::string ev_manifest, ev_fmt, ev_task = "all", ev_ties = "efron", ev_grid;
    std::optional<std::uint64_t> ev_seed;
    auto* evaluate = app.add_subcommand("evaluate", "Full cross-validated pipeline with metric reports");
    auto* manifest_opt = evaluate->add_option("--manifest", ev_manifest, "Re-run from a run manifest");
    evaluate->add_option("--embeddings", cfg.embeddings)->excludes(manifest_opt);
    evaluate->add_option("--metadata", cfg.metadata)->excludes(manifest_opt);
    evaluate->add_option("--format", ev_fmt)->excludes(manifest_opt);
    evaluate->add_option("--seed", ev_seed);
    evaluate->add_option("--k", cfg.k);
    evaluate->add_option("--gamma", cfg.gamma);
    evaluate->add_option("--subsample", cfg.subsample);
    evaluate->add_option("--folds", cfg.n_folds);
    evaluate->add_option("--delta", cfg.delta);
    evaluate->add_option("--ridge", cfg.ridge);
    evaluate->add_option("--ties", ev_ties, "efron|breslow");
    evaluate->add_option("--lambda-grid", ev_grid);
    evaluate->add_option("--bootstrap", cfg.bootstrap);
    evaluate->add_option("--permutations", cfg.permutations);
    evaluate->add_flag("--patient-auc", cfg.patient_level_auc, "AUC over per-patient mean probabilities");
    evaluate->add_flag("--km-pool-fold0", cfg.km_pool_fold0, "Extra KM plot over train+test patients of fold 0");
    evaluate->add_flag("--normalize", cfg.normalize);
    evaluate->add_option("--jobs", cfg.jobs);
    evaluate->add_option("--out", cfg.out);
    evaluate->add_option("--run-id", cfg.run_id);
    evaluate->add_option("--task", ev_task, "subtype|survival|all");

    // km
    std::string km_feat, km_meta, km_model, km_out = "km.svg", km_groups = "high,low";
    auto* km = app.add_subcommand("km", "Median-risk Kaplan-Meier curves with a log-rank test");
    km->add_option("--features", km_feat)->required();
    km->add_option("--metadata", km_meta)->required();
    km->add_option("--model", km_model, "Cox model JSON")->required();
    km->add_option("--groups", km_groups, "Risk groups to draw, e.g. high,low");
    km->add_option("--out", km_out, "SVG path; CSVs are written next to it");

    // ssl-check
    std::string ssl_z, ssl_zp;
    double ssl_lambda = 0.005;
    auto* ssl = app.add_subcommand("ssl-check", "Cross-correlation summary and Barlow Twins loss for two views");
    ssl->add_option("--z", ssl_z, "First view, N x D CSV")->required();
    ssl->add_option("--z-prime", ssl_zp, "Second view, N x D CSV")->required();
    ssl->add_option("--lambda", ssl_lambda, "Off-diagonal weight");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            auto emb = load_embeddings(in_emb, guess_format(in_emb, in_fmt), normalize);
            std::printf("tiles: %zu\nslides: %zu\npatients: %zu\ndim: %zu\n", emb.size(),
                        unique_in_order(emb.slide_ids).size(), unique_in_order(emb.patient_ids).size(), emb.dim);
            if (!in_meta.empty()) {
                const auto meta = load_metadata(in_meta);
                for (const auto& p : unique_in_order(emb.patient_ids)) meta.at(p);
                const auto s = meta.summary();
                std::printf("metadata patients: %zu\nepithelioid: %zu\nnon-epithelioid: %zu\nwith survival: %zu\n"
                            "events: %zu\n",
                            s.patients, s.epithelioid, s.non_epithelioid, s.with_survival, s.events);
            }
            if (!conv_out.empty()) save_embeddings(conv_out, emb, parse_format(conv_fmt));
        } else if (*synth_cmd) {
            spec.seed = syn_seed ? *syn_seed : default_seed();
            if (!gamma_true.empty()) spec.gamma_true = parse_list(gamma_true);
            if (!beta_true.empty()) spec.beta_true = parse_list(beta_true);
            const auto cohort = synth::generate(spec);
            fs::create_directories(syn_out);
            const auto format = parse_format(syn_fmt);
            const auto emb_path =
                (fs::path(syn_out) / (format == EmbeddingFormat::Csv ? "embeddings.csv" : "embeddings.bin")).string();
            save_embeddings(emb_path, cohort.embeddings, format);
            save_metadata((fs::path(syn_out) / "metadata.csv").string(), cohort.metadata);
            synth::save_planted_truth((fs::path(syn_out) / "planted_truth.json").string(), cohort.truth);
            std::printf("wrote %zu tiles for %zu patients to %s\nrealized censoring: %.3f\n", cohort.embeddings.size(),
                        spec.n_patients, syn_out.c_str(), cohort.truth.patients.realized_censor_fraction);
        } else if (*cluster) {
            if (cl_edges.empty() && cl_emb.empty()) throw ValidationError("cluster needs --edges or --embeddings");
            LeidenOptions opt;
            opt.gamma = cl_gamma;
            opt.seed = cl_seed ? *cl_seed : default_seed();
            std::vector<std::string> ids;
            Partition part;
            if (!cl_edges.empty()) {
                const auto g = load_edge_list(cl_edges);
                part = leiden_cluster(g, opt);
                for (std::size_t i = 0; i < g.n; ++i) ids.push_back(std::to_string(i));
            } else {
                const auto all = load_embeddings(cl_emb, guess_format(cl_emb, cl_fmt));
                const auto sub = subsample(all, std::min(cl_sub, all.size()), derive_seed(opt.seed, "subsample"));
                const auto g = build_knn(sub, std::min(cl_k, sub.size() - 1), cl_jobs);
                part = leiden_cluster(g, opt);
                ids = sub.tile_ids;
                if (!cl_atlas.empty())
                    save_atlas(cl_atlas, fit_centroids(sub, part, {opt.seed, cl_k, cl_gamma, cl_sub, std::nullopt, {}}));
            }
            std::printf("communities: %zu\nmodularity: %.6f\n", part.count, part.quality);
            if (!cl_out.empty()) save_partition(cl_out, ids, part);
        } else if (*assign_cmd) {
            const auto atlas = load_atlas(as_atlas);
            const auto emb = load_embeddings(as_emb, guess_format(as_emb, as_fmt));
            if (!as_allow_train) atlas.check_not_trained_on(unique_in_order(emb.patient_ids));
            const auto mapping = assign(atlas, emb, as_jobs);
            std::ofstream os(as_out);
            if (!os) throw Error("cannot write " + as_out);
            write_assignment_csv(os, emb.tile_ids, mapping);
            std::printf("assigned %zu tiles to %zu clusters\n", emb.size(), atlas.clusters);
        } else if (*compose_cmd) {
            const auto emb = load_embeddings(co_emb, guess_format(co_emb, co_fmt));
            std::ifstream in(co_assign);
            if (!in) throw Error("cannot open " + co_assign);
            const auto [ids, labels] = read_assignment_csv(in);
            std::unordered_map<std::string, std::uint32_t> label_of;
            for (std::size_t i = 0; i < ids.size(); ++i) label_of.emplace(ids[i], labels[i]);
            std::vector<std::uint32_t> mapping(emb.size());
            std::uint32_t max_id = 0;
            for (std::size_t i = 0; i < emb.size(); ++i) {
                auto it = label_of.find(emb.tile_ids[i]);
                if (it == label_of.end()) throw ValidationError("tile '" + emb.tile_ids[i] + "' has no assignment");
                mapping[i] = it->second;
                max_id = std::max(max_id, it->second);
            }
            const std::size_t c = co_clusters ? co_clusters : max_id + 1;
            const auto grouping = co_group == "slide" ? Grouping::Slide : Grouping::Patient;
            if (co_group != "slide" && co_group != "patient") throw ValidationError("--group must be slide or patient");
            const auto comp = compose(cluster_counts(mapping, emb, c, grouping), DeltaPolicy{co_delta});
            save_feature_csv(co_out, comp.entity_ids, comp.clr_x);
            std::printf("wrote %zu x %zu CLR features\n", comp.clr_x.rows, comp.clr_x.cols);
        } else if (*fit_cox_cmd) {
            const auto feat = load_feature_csv(fc_feat);
            const auto meta = load_metadata(fc_meta);
            survival::SurvivalDataset d;
            std::vector<std::size_t> keep;
            for (std::size_t i = 0; i < feat.ids.size(); ++i) {
                const auto& rec = meta.at(feat.ids[i]);
                if (!rec.time) continue;
                keep.push_back(i);
                d.time.push_back(*rec.time);
                d.event.push_back(*rec.event);
            }
            d.x = feat.values.select_rows(keep);
            survival::CoxOptions opt;
            opt.ridge = fc_ridge;
            opt.ties = parse_ties(fc_ties);
            const auto fit = survival::fit_cox(d, opt);
            std::printf("n=%zu events=%zu converged=%s loglik=%.6f\n", fit.n, fit.events,
                        fit.converged ? "yes" : "no", fit.loglik);
            std::printf("%-8s %10s %10s %10s %21s %10s\n", "feature", "coef", "se", "HR", "95% CI", "p");
            for (std::size_t j = 0; j < fit.gamma.size(); ++j)
                std::printf("hpc_%-4zu %10.4f %10.4f %10.4f [%9.4f, %9.4f] %10s\n", j, fit.gamma[j], fit.se[j],
                            fit.hr[j], fit.ci95[j][0], fit.ci95[j][1], survival::format_p(fit.wald_p[j]).c_str());
            std::vector<std::string> names;
            for (std::size_t j = 0; j < fit.gamma.size(); ++j) names.push_back("hpc_" + std::to_string(j));
            if (!fc_out.empty()) write_file(fc_out, survival::to_json(fit, names).dump(2) + "\n");
        } else if (*fit_logit_cmd) {
            const auto feat = load_feature_csv(fl_feat);
            const auto meta = load_metadata(fl_meta);
            const auto patients = patients_of(feat.ids, meta, fl_emb, fl_fmt);
            std::vector<std::size_t> keep;
            std::vector<int> y;
            std::vector<std::string> groups;
            for (std::size_t i = 0; i < patients.size(); ++i) {
                const auto& rec = meta.at(patients[i]);
                if (!rec.subtype_label) continue;
                keep.push_back(i);
                y.push_back(*rec.subtype_label);
                groups.push_back(patients[i]);
            }
            const auto x = feat.values.select_rows(keep);
            const std::uint64_t seed = fl_seed ? *fl_seed : default_seed();
            double lambda = fl_lambda ? *fl_lambda : 0.0;
            if (!fl_lambda) {
                const auto grid = fl_grid.empty() ? default_lambda_grid() : parse_list(fl_grid);
                lambda = eval::select_lambda(x, y, groups, grid, 3, derive_seed(seed, "lambda"));
            }
            const auto fit = logistic::fit_logistic(x, y, lambda);
            auto j = logistic::to_json(fit);
            std::printf("lambda=%g intercept=%.6f converged=%s\n", lambda, fit.beta0, fit.converged ? "yes" : "no");
            std::vector<eval::CoefficientInterval> ci;
            if (fl_boot) {
                ci = eval::bootstrap_coefficients(x, y, groups, lambda, fl_boot, derive_seed(seed, "coefficients"));
                nlohmann::json arr = nlohmann::json::array();
                for (const auto& c : ci) arr.push_back({{"lo", c.lo}, {"hi", c.hi}, {"excludes_zero", c.excludes_zero}});
                j["bootstrap_ci95"] = arr;
            }
            for (std::size_t k = 0; k < fit.beta.size(); ++k) {
                std::printf("hpc_%-4zu beta=%10.4f OR=%10.4f", k, fit.beta[k], fit.odds_ratios[k]);
                if (!ci.empty()) std::printf("  95%% CI [%.4f, %.4f]%s", ci[k].lo, ci[k].hi, ci[k].excludes_zero ? " *" : "");
                std::printf("\n");
            }
            if (!fl_out.empty()) write_file(fl_out, j.dump(2) + "\n");
        } else if (*evaluate) {
            if (!ev_manifest.empty()) {
                const auto recorded = load_manifest_config(ev_manifest);
                const auto user_out = cfg.out;
                const auto user_run = cfg.run_id;
                cfg = recorded;
                if (evaluate->count("--out")) cfg.out = user_out;
                if (evaluate->count("--run-id")) cfg.run_id = user_run;
            } else {
                if (cfg.embeddings.empty() || cfg.metadata.empty())
                    throw ValidationError("evaluate needs --embeddings and --metadata, or --manifest");
                cfg.seed = ev_seed ? *ev_seed : default_seed();
                cfg.ties = parse_ties(ev_ties);
                cfg.embeddings_format = guess_format(cfg.embeddings, ev_fmt);
                if (!ev_grid.empty()) cfg.lambda_grid = parse_list(ev_grid);
                cfg.embeddings = fs::absolute(cfg.embeddings).string();
                cfg.metadata = fs::absolute(cfg.metadata).string();
            }
            const auto run = run_pipeline(cfg);
            std::printf("run directory: %s\n", run.dir.string().c_str());
            const auto& m = run.metrics["metrics"];
            if (ev_task == "survival" || ev_task == "all") std::printf("c_index   %s\n", mean_sd(m["c_index"]).c_str());
            if (ev_task == "subtype" || ev_task == "all")
                for (const char* name : {"auc", "accuracy", "recall", "precision", "f1"})
                    std::printf("%-9s %s\n", name, mean_sd(m[name]).c_str());
        } else if (*km) {
            const auto feat = load_feature_csv(km_feat);
            const auto meta = load_metadata(km_meta);
            std::ifstream in(km_model);
            if (!in) throw Error("cannot open " + km_model);
            const auto model = survival::cox_from_json(nlohmann::json::parse(in));
            std::vector<std::size_t> keep;
            std::vector<double> time;
            std::vector<int> event;
            for (std::size_t i = 0; i < feat.ids.size(); ++i) {
                const auto& rec = meta.at(feat.ids[i]);
                if (!rec.time) continue;
                keep.push_back(i);
                time.push_back(*rec.time);
                event.push_back(*rec.event);
            }
            const auto risk = survival::risk_scores(model, feat.values.select_rows(keep));
            const auto groups = survival::stratify_median(risk);
            std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> by_group;
            for (std::size_t i = 0; i < risk.size(); ++i) {
                auto& g = by_group[groups[i] == survival::RiskGroup::High ? "high" : "low"];
                g.first.push_back(time[i]);
                g.second.push_back(event[i]);
            }
            std::vector<std::string> wanted;
            {
                std::stringstream ss(km_groups);
                std::string item;
                while (std::getline(ss, item, ','))
                    if (item == "high" || item == "low") wanted.push_back(item);
                    else throw ValidationError("unknown group '" + item + "' (high|low)");
            }
            std::vector<survival::NamedCurve> curves;
            const fs::path svg(km_out);
            for (const auto& w : wanted) {
                const auto& g = by_group[w];
                if (g.first.empty()) throw ValidationError("risk group '" + w + "' is empty");
                curves.push_back({w + " risk", survival::kaplan_meier(g.first, g.second)});
                std::ostringstream os;
                survival::write_km_csv(os, curves.back().curve);
                write_file((svg.parent_path() / (svg.stem().string() + "_" + w + ".csv")).string(), os.str());
            }
            std::string annotation;
            const auto& hi = by_group["high"];
            const auto& lo = by_group["low"];
            if (!hi.first.empty() && !lo.first.empty()) {
                const auto lr = survival::logrank_test(hi.first, hi.second, lo.first, lo.second);
                annotation = "log-rank p = " + survival::format_p(lr.p);
                std::printf("log-rank chi2 = %.4f, p = %s\n", lr.chi2, survival::format_p(lr.p).c_str());
            }
            write_file(km_out, survival::km_svg(curves, annotation));
            std::printf("wrote %s\n", km_out.c_str());
        } else if (*ssl) {
            const ssl::BatchPair pair{ssl::load_matrix_csv(ssl_z), ssl::load_matrix_csv(ssl_zp)};
            const auto c = ssl::cross_correlation(pair);
            const auto s = ssl::summarize(c);
            std::printf("N=%zu D=%zu\nmean diagonal: %.6f\nmin diagonal: %.6f\nmax |off-diagonal|: %.6f\n"
                        "mean |off-diagonal|: %.6f\nloss (lambda=%g): %.10g\n",
                        pair.z.rows, pair.z.cols, s.mean_diagonal, s.min_diagonal, s.max_abs_off_diagonal,
                        s.mean_abs_off_diagonal, ssl_lambda, ssl::barlow_loss(c, ssl_lambda));
        }
    } catch (const ProvenanceError& e) {
        std::fprintf(stderr, "provenance error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

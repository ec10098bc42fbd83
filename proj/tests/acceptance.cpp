// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include "oracles.hpp"

#include <phenoatlas/phenoatlas.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace phenoatlas;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [failed]");
        pass = pass && ok;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

NeighborGraph graph_of(std::size_t n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<NeighborGraph::Edge> e;
    for (auto [u, v] : edges) e.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v), 1.0});
    return NeighborGraph::from_edges(n, std::move(e));
}

EmbeddingSet random_cloud(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<float> g(0.0f, 1.0f);
    EmbeddingSet e;
    std::vector<float> v(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& x : v) x = g(rng);
        e.push_back("T" + std::to_string(i), "S" + std::to_string(i), "P" + std::to_string(i), v);
    }
    return e;
}

survival::SurvivalDataset random_survival(std::size_t n, std::size_t p, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    survival::SurvivalDataset d;
    d.x = Matrix(n, p);
    for (auto& v : d.x.data) v = g(rng);
    for (std::size_t i = 0; i < n; ++i) {
        d.time.push_back(u(rng));  // continuous draws: tie-free
        d.event.push_back(rng() % 4 != 0);
    }
    return d;
}

Outcome clustering_recovery() {
    Outcome o;
    synth::SynthSpec s;
    s.n_patients = 100;
    s.tiles_per_slide = 200;
    s.c_true = 10;
    s.dim = 64;
    s.blob_sigma = 0.05;
    s.blob_separation = 1.0;
    s.seed = 1;
    const auto cohort = synth::generate(s);
    const auto start = std::chrono::steady_clock::now();
    const auto graph = build_knn(cohort.embeddings, 50, 1);
    LeidenOptions opt;
    opt.gamma = 1.0;
    const auto part = leiden_cluster(graph, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double ari = stats::adjusted_rand_index<std::uint32_t, int>(part.assignment, cohort.truth.tile_labels);
    o.check(cohort.embeddings.size() == 20000, std::to_string(cohort.embeddings.size()) + " tiles");
    o.check(ari >= 0.95, "ARI " + fmt("%.4f", ari) + " (" + std::to_string(part.count) + " communities)");
    o.check(secs < 60.0, "kNN+Leiden " + fmt("%.1f", secs) + " s single-threaded");

    const std::vector<std::pair<int, int>> tri{{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}};
    const auto [best_q, best] = oracle::best_partition(oracle::dense(6, tri), 1.0);
    const auto p = leiden_cluster(graph_of(6, tri), opt);
    const std::vector<int> found(p.assignment.begin(), p.assignment.end());
    o.check(std::abs(p.quality - 0.5) < 1e-12 && std::abs(best_q - 0.5) < 1e-12 &&
                oracle::co_membership(found) == oracle::co_membership(best),
            "two triangles Q " + fmt("%.6f", p.quality) + " matches exhaustive search");
    return o;
}

Outcome modularity_monotonicity() {
    Outcome o;
    std::size_t violations = 0, iterations = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto graph = build_knn(random_cloud(500, 8, 1000 + seed), 10, 1);
        LeidenOptions opt;
        opt.gamma = seed % 2 ? 1.0 : 3.0;
        opt.seed = seed;
        LeidenTrace trace;
        try {
            leiden_cluster(graph, opt, &trace);
        } catch (const std::logic_error&) {
            ++violations;  // the clusterer asserts monotonicity itself
        }
        for (std::size_t i = 1; i < trace.quality.size(); ++i) violations += trace.quality[i] < trace.quality[i - 1];
        iterations += trace.quality.size();
    }
    o.check(violations == 0, std::to_string(violations) + " decreases over " + std::to_string(iterations) +
                                 " recorded iterations in 50 runs");
    return o;
}

Outcome composition_correctness() {
    Outcome o;
    Rng rng(3);
    std::uniform_int_distribution<int> width(2, 60), count(0, 40);
    double worst_clr = 0.0, worst_unit = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<std::int64_t> c(static_cast<std::size_t>(width(rng)));
        for (auto& v : c) v = count(rng);
        c[static_cast<std::size_t>(trial) % c.size()] += 1;
        std::int64_t total = 0;
        for (auto v : c) total += v;
        const auto r = multiplicative_replacement(frequencies(c), DeltaPolicy{}.for_row(total, c.size()));
        double unit = -1.0, zero = 0.0;
        for (double v : r) unit += v;
        for (double v : clr(r)) zero += v;
        worst_unit = std::max(worst_unit, std::abs(unit));
        worst_clr = std::max(worst_clr, std::abs(zero));
    }
    o.check(worst_clr <= 1e-9, "max |sum clr| " + fmt("%.2e", worst_clr) + " over 1e4 rows");
    o.check(worst_unit <= 1e-12, "max |sum replaced - 1| " + fmt("%.2e", worst_unit));
    const std::vector<double> a{0.5, 0.25, 0.25};
    const auto x = clr(a);
    o.check(std::abs(x[0] - 0.4621) <= 1e-4 && std::abs(x[1] + 0.2310) <= 1e-4 && std::abs(x[2] + 0.2310) <= 1e-4,
            "clr(0.5,0.25,0.25) = (" + fmt("%.4f", x[0]) + "," + fmt("%.4f", x[1]) + "," + fmt("%.4f", x[2]) + ")");
    return o;
}

Outcome cox_correctness() {
    Outcome o;
    double worst_null = 0.0, worst_grad = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto d = random_survival(60, 4, seed);
        double want = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (!d.event[i]) continue;
            double at_risk = 0.0;
            for (std::size_t j = 0; j < d.size(); ++j) at_risk += d.time[j] >= d.time[i];
            want -= std::log(at_risk);
        }
        const std::vector<double> zero(4, 0.0);
        worst_null = std::max(worst_null, std::abs(survival::partial_loglik(d, zero) - want));

        const std::vector<double> beta{0.3, -0.5, 0.2, 0.7};
        const auto pl = survival::partial_likelihood(d, beta);
        const auto fd = oracle::fd_gradient([&](const std::vector<double>& b) { return survival::partial_loglik(d, b); },
                                            beta);
        for (std::size_t j = 0; j < 4; ++j)
            worst_grad = std::max(worst_grad, std::abs(pl.gradient[static_cast<Eigen::Index>(j)] - fd[j]) /
                                                  std::max(1.0, std::abs(fd[j])));
    }
    o.check(worst_null <= 1e-12, "null loglik error " + fmt("%.1e", worst_null));
    o.check(worst_grad <= 1e-6, "gradient rel. error " + fmt("%.1e", worst_grad));

    synth::SynthSpec s;
    s.n_patients = 2000;
    s.tiles_per_slide = 200;
    s.c_true = 4;
    s.gamma_true = {1.0, -1.0, 0.8, -0.8};
    s.seed = 2024;
    const auto draw = synth::draw_patients(s);
    const auto fit = survival::fit_cox({draw.clr_x, draw.time, draw.event});
    bool within = true;
    std::string est;
    for (std::size_t j = 0; j < 4; ++j) {
        within = within && std::abs(fit.gamma[j] - s.gamma_true[j]) <= 0.1 * std::abs(s.gamma_true[j]);
        est += (j ? "," : "") + fmt("%.3f", fit.gamma[j]);
    }
    const double r = stats::pearson(fit.gamma, s.gamma_true);
    o.check(within, "planted gamma recovered within 10% (" + est + ")");
    o.check(r >= 0.95, "r " + fmt("%.4f", r));

    const auto [hr, lo, hi] = survival::hazard_ratio_ci(0.0, 0.1);
    o.check(std::abs(lo - 0.8217) <= 1e-4 && std::abs(hi - 1.2170) <= 1e-4,
            "HR CI exp(0 -/+ 1.96*0.1) = [" + fmt("%.5f", lo) + ", " + fmt("%.5f", hi) + "] vs [0.8217, 1.2170]");
    return o;
}

double test_logrank_p(const synth::SynthSpec& train_spec, const synth::SynthSpec& test_spec) {
    const auto train = synth::draw_patients(train_spec);
    const auto test = synth::draw_patients(test_spec);
    const auto fit = survival::fit_cox({train.clr_x, train.time, train.event});
    const auto groups = survival::stratify_median(survival::risk_scores(fit, test.clr_x));
    std::vector<double> th, tl;
    std::vector<int> eh, el;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto& t = groups[i] == survival::RiskGroup::High ? th : tl;
        auto& e = groups[i] == survival::RiskGroup::High ? eh : el;
        t.push_back(test.time[i]);
        e.push_back(test.event[i]);
    }
    return survival::logrank_test(th, eh, tl, el).p;
}

Outcome survival_stratification() {
    // the risk model is fit on an independent training cohort and applied to a held-out one
    Outcome o;
    synth::SynthSpec train;
    train.n_patients = 1000;
    train.tiles_per_slide = 200;
    train.c_true = 4;
    train.gamma_true = {1.0, -1.0, 1.0, -1.0};  // norm 2
    train.seed = 500;
    auto test = train;
    test.seed = 501;
    const double strong = test_logrank_p(train, test);
    o.check(strong < 1e-6, "strong effect p " + fmt("%.2e", strong));

    std::vector<double> null_p;
    for (std::uint64_t sim = 0; sim < 200; ++sim) {
        auto a = train, b = test;
        a.gamma_true.clear();
        b.gamma_true.clear();
        a.n_patients = 500;
        a.seed = 10000 + 2 * sim;
        b.seed = 10001 + 2 * sim;
        null_p.push_back(test_logrank_p(a, b));
    }
    const auto ks = stats::ks_uniform(null_p);
    o.check(ks.p_value > 0.05, "null p-values KS D " + fmt("%.4f", ks.statistic) + ", p " + fmt("%.3f", ks.p_value));
    return o;
}

Outcome classifier_correctness() {
    Outcome o;
    Rng rng(6);
    std::normal_distribution<double> g(0.0, 1.0);
    auto random_problem = [&](std::size_t n, std::size_t p) {
        std::pair<Matrix, std::vector<int>> pr{Matrix(n, p), std::vector<int>(n)};
        for (auto& v : pr.first.data) v = g(rng);
        for (std::size_t i = 0; i < n; ++i) pr.second[i] = pr.first(i, 0) - 0.5 * pr.first(i, 1) + g(rng) > 0.3;
        pr.second[0] = 1;
        pr.second[1] = 0;
        return pr;
    };

    bool all_zero = true;
    double worst_b0 = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto [x, y] = random_problem(80, 6);
        const auto fit = logistic::fit_logistic(x, y, 1e3);
        for (double b : fit.beta) all_zero = all_zero && b == 0.0;
        const double ybar = static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
        worst_b0 = std::max(worst_b0, std::abs(fit.beta0 - logistic::logit(ybar)));
    }
    o.check(all_zero, "large lambda gives beta = 0 exactly");
    o.check(worst_b0 <= 1e-6, "intercept vs logit(mean y) " + fmt("%.1e", worst_b0));

    Matrix sep(8, 2);
    sep.data = {2, 1, 1.5, 2, 3, 0.5, 2.5, 2.5, -2, -1, -1.5, -2, -3, -0.5, -2.5, -2.5};
    const std::vector<int> ys{1, 1, 1, 1, 0, 0, 0, 0};
    const auto sfit = logistic::fit_logistic(sep, ys, 0.01);
    const double auc = eval::roc_auc(ys, logistic::predict_proba(sfit, sep));
    o.check(auc == 1.0, "separable training AUC " + fmt("%.4f", auc));

    logistic::LogisticOptions opt;
    opt.keep_trace = true;
    std::size_t violations = 0, steps = 0;
    for (int t = 0; t < 100; ++t) {
        const auto [x, y] = random_problem(30 + static_cast<std::size_t>(t), 5);
        const auto fit = logistic::fit_logistic(x, y, 0.002 * (t % 10), opt);
        for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
            violations += fit.objective_trace[i] > fit.objective_trace[i - 1];
        steps += fit.objective_trace.size();
    }
    o.check(violations == 0, std::to_string(violations) + " objective increases over " + std::to_string(steps) +
                                 " steps in 100 fits");
    return o;
}

Outcome metric_oracles() {
    Outcome o;
    Rng rng(7);
    std::size_t c_mismatch = 0, auc_mismatch = 0, c_checked = 0, flip_bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + rng() % 29;
        std::vector<double> t(n), r(n), s(n);
        std::vector<int> e(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            t[i] = static_cast<double>(1 + rng() % 12);
            e[i] = static_cast<int>(rng() % 3 != 0);
            r[i] = static_cast<double>(rng() % 7);
            y[i] = static_cast<int>(rng() % 2);
            s[i] = static_cast<double>(rng() % 9);
        }
        y[0] = 1;
        y[1] = 0;
        if (oracle::has_comparable_pair(t, e)) {
            ++c_checked;
            c_mismatch += eval::c_index(t, e, r) != oracle::c_index_pairs(t, e, r);
        }
        auc_mismatch += eval::roc_auc(y, s) != oracle::auc_pairs(y, s);

        // tie-free: distinct times and distinct risks
        std::vector<double> tf(n), rf(n), neg(n);
        std::iota(tf.begin(), tf.end(), 1.0);
        std::iota(rf.begin(), rf.end(), 0.0);
        std::shuffle(rf.begin(), rf.end(), rng);
        for (std::size_t i = 0; i < n; ++i) neg[i] = -rf[i];
        std::vector<int> ef(n, 1);
        flip_bad += std::abs(eval::c_index(tf, ef, rf) + eval::c_index(tf, ef, neg) - 1.0) > 1e-15;
    }
    o.check(c_mismatch == 0, "c-index mismatches " + std::to_string(c_mismatch) + "/" + std::to_string(c_checked));
    o.check(auc_mismatch == 0, "AUC mismatches " + std::to_string(auc_mismatch) + "/500");
    o.check(flip_bad == 0, "c(r) + c(-r) != 1 in " + std::to_string(flip_bad) + "/500");

    std::vector<int> y(30);
    std::vector<double> s(30);
    for (std::size_t i = 0; i < 30; ++i) {
        y[i] = i >= 15;
        s[i] = static_cast<double>(i);
    }
    auto auc_under = [&](std::span<const std::size_t> perm) {
        std::vector<int> py(30);
        for (std::size_t i = 0; i < 30; ++i) py[i] = y[perm[i]];
        return eval::roc_auc(py, s);
    };
    const std::size_t B = 999;
    const double p = eval::permutation_test(auc_under, 30, B, 11);
    o.check(p == 1.0 / (B + 1.0), "permutation p " + fmt("%.4g", p) + " with B = 999");
    return o;
}

Outcome barlow_twins() {
    Outcome o;
    Matrix id(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) id(i, i) = 1.0;
    const double l0 = ssl::barlow_loss(id, 0.005);
    o.check(l0 == 0.0, "loss(I) = " + fmt("%.3g", l0));
    Matrix c2(2, 2);
    c2.data = {1.0, 0.5, 0.5, 1.0};
    const double l2 = ssl::barlow_loss(c2, 0.005);
    o.check(std::abs(l2 - 0.0025) <= 1e-12, "2-D example " + fmt("%.12f", l2));

    Rng rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix z(40, 6), zp(40, 6);
    for (auto& v : z.data) v = g(rng);
    for (std::size_t k = 0; k < zp.data.size(); ++k) zp.data[k] = z.data[k] + 0.7 * g(rng);
    const auto c = ssl::cross_correlation({z, zp});
    const auto grad = ssl::barlow_gradient(c, 0.005);
    const auto fd = oracle::fd_gradient(
        [&](const std::vector<double>& v) {
            Matrix m(6, 6);
            m.data = v;
            return ssl::barlow_loss(m, 0.005);
        },
        c.data);
    double worst = 0.0;
    for (std::size_t k = 0; k < fd.size(); ++k) worst = std::max(worst, std::abs(grad.data[k] - fd[k]));
    o.check(worst <= 1e-7, "gradient error " + fmt("%.1e", worst));
    return o;
}

synth::Cohort pipeline_cohort() {
    synth::SynthSpec s;
    s.n_patients = 40;
    s.slides_per_patient = 2;
    s.tiles_per_slide = 50;
    s.c_true = 5;
    s.dim = 16;
    s.gamma_true = {0.8, -0.8, 0.5, -0.5, 0.0};
    s.beta_true = {1.5, -1.5, 0.0, 0.5, -0.5};
    s.seed = 77;
    return synth::generate(s);
}

RunConfig pipeline_config(const fs::path& out) {
    RunConfig cfg;
    cfg.seed = 2025;
    cfg.k = 15;
    cfg.gamma = 1.0;
    cfg.subsample = 2000;
    cfg.n_folds = 5;
    cfg.bootstrap = 200;
    cfg.permutations = 199;
    cfg.out = out.string();
    return cfg;
}

Outcome protocol_integrity(const fs::path& root) {
    Outcome o;
    const auto cohort = pipeline_cohort();
    const auto cfg = pipeline_config(root / "integrity");
    const auto plan = plan_folds(cohort.embeddings, cohort.metadata, cfg);
    std::map<std::string, int> tested;
    for (const auto& f : plan.folds)
        for (const auto& p : f.test) ++tested[p];
    bool once = tested.size() == cohort.metadata.size();
    for (const auto& [p, n] : tested) once = once && n == 1;
    o.check(plan.size() == 5 && once, "5-fold plan tests each of " + std::to_string(tested.size()) + " patients once");

    auto corrupted = plan;
    const std::string leaked = corrupted.folds[2].test.front();
    corrupted.folds[2].train.push_back(leaked);
    bool plan_tripped = false, fold_tripped = false;
    try {
        corrupted.validate();
    } catch (const ProvenanceError&) {
        plan_tripped = true;
    }
    try {
        run_fold(cohort.embeddings, cohort.metadata, corrupted.folds[2], 2, cfg);
    } catch (const ProvenanceError&) {
        fold_tripped = true;
    }
    o.check(plan_tripped, "plan validation rejects " + leaked);
    o.check(fold_tripped, "fold run rejects the leaked patient");
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism(const fs::path& root) {
    Outcome o;
    const auto cohort = pipeline_cohort();
    auto cfg = pipeline_config(root / "determinism");
    cfg.run_id = "serial-a";
    const auto a = run_pipeline(cohort.embeddings, cohort.metadata, cfg);
    cfg.run_id = "serial-b";
    const auto b = run_pipeline(cohort.embeddings, cohort.metadata, cfg);
    cfg.run_id = "parallel";
    cfg.jobs = 4;
    const auto c = run_pipeline(cohort.embeddings, cohort.metadata, cfg);
    const auto ja = slurp(a.dir / "metrics.json");
    o.check(!ja.empty() && ja == slurp(b.dir / "metrics.json"), "repeat run metrics.json byte-identical");
    o.check(ja == slurp(c.dir / "metrics.json"), "jobs = 4 metrics.json byte-identical");
    return o;
}

}  // namespace

int main() {
    const fs::path root = fs::temp_directory_path() / "phenoatlas_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);

    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"clustering recovery", clustering_recovery},
        {"modularity monotonicity", modularity_monotonicity},
        {"composition correctness", composition_correctness},
        {"Cox correctness", cox_correctness},
        {"survival stratification", survival_stratification},
        {"classifier correctness", classifier_correctness},
        {"metric oracles", metric_oracles},
        {"Barlow Twins loss", barlow_twins},
        {"protocol integrity", [&] { return protocol_integrity(root); }},
        {"determinism", [&] { return determinism(root); }},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("error: ") + e.what();
        }
        failed += !o.pass;
        std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}

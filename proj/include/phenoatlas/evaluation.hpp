// evaluation.hpp
//
// Patient-wise fold plans, discrimination/classification metrics, and
// resampling-based uncertainty (bootstrap percentile intervals, permutation p).
#pragma once

#include <phenoatlas/common.hpp>
#include <phenoatlas/logistic.hpp>
#include <phenoatlas/stats.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace phenoatlas::eval {

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

struct FoldPlan {
    std::vector<Fold> folds;
    std::uint64_t seed = 0;

    std::size_t size() const { return folds.size(); }

    /// Train/test disjoint per fold; every patient tested exactly once.
    void validate() const {
        std::map<std::string, int> tested;
        std::set<std::string> everyone;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::set<std::string> train(folds[f].train.begin(), folds[f].train.end());
            for (const auto& p : folds[f].test) {
                if (train.count(p))
                    throw ProvenanceError("patient '" + p + "' is in both train and test of fold " + std::to_string(f));
                ++tested[p];
                everyone.insert(p);
            }
            everyone.insert(train.begin(), train.end());
        }
        for (const auto& p : everyone)
            if (tested[p] != 1)
                throw ProvenanceError("patient '" + p + "' is tested " + std::to_string(tested[p]) + " times");
    }
};

/// Shuffles patients and deals them round-robin into folds. With labels, each
/// class is dealt in turn (continuing the rotation), so class counts per fold
/// differ by at most one.
inline FoldPlan make_folds(std::span<const std::string> patients, std::size_t n_folds, std::uint64_t seed,
                           std::span<const int> stratify_by = {}) {
    if (n_folds < 2) throw ValidationError("need at least two folds");
    if (n_folds > patients.size()) throw ValidationError("more folds than patients");
    if (!stratify_by.empty() && stratify_by.size() != patients.size())
        throw ValidationError("stratification labels do not match patients");
    {
        std::set<std::string> uniq(patients.begin(), patients.end());
        if (uniq.size() != patients.size()) throw ValidationError("duplicate patient ids in fold plan input");
    }

    Rng rng(seed);
    std::vector<std::size_t> order(patients.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<std::size_t>> buckets(1, order);
    if (!stratify_by.empty()) {
        std::map<int, std::vector<std::size_t>> by_label;
        for (auto i : order) by_label[stratify_by[i]].push_back(i);
        buckets.clear();
        for (auto& [label, members] : by_label) buckets.push_back(std::move(members));
    }

    std::vector<std::vector<std::size_t>> test(n_folds);
    std::size_t next = 0;
    for (const auto& bucket : buckets)
        for (auto i : bucket) test[next++ % n_folds].push_back(i);

    FoldPlan plan;
    plan.seed = seed;
    for (std::size_t f = 0; f < n_folds; ++f) {
        std::vector<char> in_test(patients.size(), 0);
        for (auto i : test[f]) in_test[i] = 1;
        Fold fold;
        std::sort(test[f].begin(), test[f].end());
        for (auto i : test[f]) fold.test.push_back(patients[i]);
        for (std::size_t i = 0; i < patients.size(); ++i)
            if (!in_test[i]) fold.train.push_back(patients[i]);
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

/// Harrell's C: over pairs where the earlier time is an event, the fraction
/// where the earlier subject has the higher risk; risk ties count one half.
inline double c_index(std::span<const double> time, std::span<const int> event, std::span<const double> risk) {
    const std::size_t n = time.size();
    if (event.size() != n || risk.size() != n) throw ValidationError("c_index: length mismatch");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return time[a] < time[b]; });
    double concordant = 0.0, comparable = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const auto i = order[a];
        if (!event[i]) continue;
        for (std::size_t b = a + 1; b < n; ++b) {
            const auto j = order[b];
            if (!(time[j] > time[i])) continue;
            comparable += 1.0;
            if (risk[i] > risk[j]) concordant += 1.0;
            else if (risk[i] == risk[j]) concordant += 0.5;
        }
    }
    if (comparable == 0.0) throw ValidationError("c_index: no comparable pairs");
    return concordant / comparable;
}

/// Mann-Whitney AUC via average ranks; score ties count one half.
inline double roc_auc(std::span<const int> labels, std::span<const double> scores) {
    const std::size_t n = labels.size();
    if (scores.size() != n) throw ValidationError("roc_auc: length mismatch");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t a = 0; a < n;) {
        std::size_t b = a;
        while (b < n && scores[order[b]] == scores[order[a]]) ++b;
        const double avg_rank = 0.5 * static_cast<double>(a + 1 + b);  // mean of ranks a+1..b
        for (std::size_t k = a; k < b; ++k)
            if (labels[order[k]]) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            }
        a = b;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw ValidationError("roc_auc: both classes must be present");
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

struct ClassificationMetrics {
    double accuracy = 0.0;
    std::optional<double> precision;  // undefined without positive predictions
    std::optional<double> recall;     // undefined without positive labels
    std::optional<double> f1;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline ClassificationMetrics classification_metrics(std::span<const int> labels, std::span<const double> scores,
                                                    double threshold = 0.5) {
    if (labels.size() != scores.size() || labels.empty()) throw ValidationError("classification_metrics: bad input");
    ClassificationMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i]) ++m.tp;
        else if (pred) ++m.fp;
        else if (labels[i]) ++m.fn;
        else ++m.tn;
    }
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(labels.size());
    if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.precision && m.recall)
        m.f1 = (*m.precision + *m.recall) > 0 ? 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall) : 0.0;
    return m;
}

/// Metric over a resample of unit indices; nullopt when undefined on that resample.
using ResampleMetric = std::function<std::optional<double>(std::span<const std::size_t>)>;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// 95% percentile bootstrap interval over `n_units` resampled with replacement.
inline Interval bootstrap_ci(const ResampleMetric& metric, std::size_t n_units, std::size_t B, std::uint64_t seed,
                             double level = 0.95) {
    if (B < 100) throw ValidationError("bootstrap needs at least 100 resamples");
    if (n_units == 0) throw ValidationError("bootstrap of an empty sample");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n_units - 1);
    std::vector<std::size_t> idx(n_units);
    std::vector<double> values;
    values.reserve(B);
    std::size_t undefined = 0;
    for (std::size_t b = 0; b < B; ++b) {
        for (auto& i : idx) i = pick(rng);
        if (auto v = metric(idx)) values.push_back(*v);
        else ++undefined;
    }
    if (static_cast<double>(undefined) > 0.2 * static_cast<double>(B))
        throw ValidationError("metric undefined on " + std::to_string(undefined) + " of " + std::to_string(B) +
                              " bootstrap resamples");
    const double alpha = 0.5 * (1.0 - level);
    return {stats::quantile(values, alpha), stats::quantile(values, 1.0 - alpha)};
}

/// Metric evaluated with labels permuted by `perm` (perm[i] = source of unit i's label).
using PermutedMetric = std::function<double(std::span<const std::size_t>)>;

/// Add-one permutation p-value: (1 + #{permuted >= observed}) / (B + 1).
inline double permutation_test(const PermutedMetric& metric, std::size_t n_units, std::size_t B, std::uint64_t seed) {
    if (B < 100) throw ValidationError("permutation test needs at least 100 permutations");
    std::vector<std::size_t> perm(n_units);
    std::iota(perm.begin(), perm.end(), 0);
    const double observed = metric(perm);
    Rng rng(seed);
    std::size_t at_least = 0;
    for (std::size_t b = 0; b < B; ++b) {
        std::shuffle(perm.begin(), perm.end(), rng);
        if (metric(perm) >= observed) ++at_least;
    }
    return (1.0 + static_cast<double>(at_least)) / (static_cast<double>(B) + 1.0);
}

/// Per-fold values of one metric with their mean and sample standard deviation.
struct MetricSummary {
    std::vector<double> per_fold;
    double mean = 0.0;
    double sd = 0.0;

    static MetricSummary of(std::vector<double> values) {
        MetricSummary s;
        s.per_fold = std::move(values);
        std::vector<double> finite;
        for (double v : s.per_fold)
            if (std::isfinite(v)) finite.push_back(v);
        s.mean = finite.empty() ? std::nan("") : stats::mean(finite);
        s.sd = finite.empty() ? std::nan("") : stats::stddev(finite);
        return s;
    }
};

inline nlohmann::json to_json(const MetricSummary& s) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json per = nlohmann::json::array();
    for (double v : s.per_fold) per.push_back(num(v));
    return {{"per_fold", per}, {"mean", num(s.mean)}, {"sd", num(s.sd)}};
}

// ---------------------------------------------------------------------------
// Lambda selection and coefficient intervals for the L1 classifier.

/// Patient-grouped inner CV over `grid`; returns the lambda with the highest
/// mean validation AUC (ties go to the larger, sparser lambda).
inline double select_lambda(const Matrix& x, std::span<const int> y, std::span<const std::string> groups,
                            std::span<const double> grid, std::size_t inner_folds, std::uint64_t seed) {
    if (grid.empty()) throw ValidationError("empty lambda grid");
    if (grid.size() == 1) return grid[0];
    const auto units = [&] {
        std::vector<std::string> u;
        std::set<std::string> seen;
        for (const auto& g : groups)
            if (seen.insert(g).second) u.push_back(g);
        return u;
    }();
    if (units.size() < inner_folds) return *std::max_element(grid.begin(), grid.end());
    const auto plan = make_folds(units, inner_folds, seed);

    std::vector<double> sorted_grid(grid.begin(), grid.end());
    std::sort(sorted_grid.begin(), sorted_grid.end(), std::greater<>());
    double best_lambda = sorted_grid.front(), best_auc = -1.0;
    for (double lambda : sorted_grid) {
        std::vector<double> aucs;
        for (const auto& fold : plan.folds) {
            std::set<std::string> test(fold.test.begin(), fold.test.end());
            std::vector<std::size_t> tr, te;
            for (std::size_t i = 0; i < groups.size(); ++i) (test.count(groups[i]) ? te : tr).push_back(i);
            std::vector<int> ytr, yte;
            for (auto i : tr) ytr.push_back(y[i]);
            for (auto i : te) yte.push_back(y[i]);
            const auto pos_tr = std::count(ytr.begin(), ytr.end(), 1);
            const auto pos_te = std::count(yte.begin(), yte.end(), 1);
            if (pos_tr == 0 || pos_tr == static_cast<long>(ytr.size()) || pos_te == 0 ||
                pos_te == static_cast<long>(yte.size()))
                continue;
            const auto fit = logistic::fit_logistic(x.select_rows(tr), ytr, lambda);
            aucs.push_back(roc_auc(yte, logistic::predict_proba(fit, x.select_rows(te))));
        }
        if (aucs.empty()) continue;
        const double m = stats::mean(aucs);
        if (m > best_auc) {
            best_auc = m;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

struct CoefficientInterval {
    double lo = 0.0;
    double hi = 0.0;
    bool excludes_zero = false;
};

/// Percentile bootstrap intervals for the L1 coefficients, resampling groups (patients).
inline std::vector<CoefficientInterval> bootstrap_coefficients(const Matrix& x, std::span<const int> y,
                                                               std::span<const std::string> groups, double lambda,
                                                               std::size_t B, std::uint64_t seed) {
    std::vector<std::string> units;
    std::unordered_map<std::string, std::vector<std::size_t>> rows_of;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto [it, fresh] = rows_of.try_emplace(groups[i]);
        if (fresh) units.push_back(groups[i]);
        it->second.push_back(i);
    }
    std::vector<std::vector<double>> draws(x.cols);
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, units.size() - 1);
    std::size_t undefined = 0;
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<std::size_t> rows;
        for (std::size_t u = 0; u < units.size(); ++u) {
            const auto& r = rows_of[units[pick(rng)]];
            rows.insert(rows.end(), r.begin(), r.end());
        }
        std::vector<int> yb;
        for (auto i : rows) yb.push_back(y[i]);
        const auto pos = std::count(yb.begin(), yb.end(), 1);
        if (pos == 0 || pos == static_cast<long>(yb.size())) {
            ++undefined;
            continue;
        }
        const auto fit = logistic::fit_logistic(x.select_rows(rows), yb, lambda);
        for (std::size_t j = 0; j < x.cols; ++j) draws[j].push_back(fit.beta[j]);
    }
    if (static_cast<double>(undefined) > 0.2 * static_cast<double>(B))
        throw ValidationError("coefficient bootstrap: single-class resamples exceed 20%");
    std::vector<CoefficientInterval> out(x.cols);
    for (std::size_t j = 0; j < x.cols; ++j) {
        out[j].lo = stats::quantile(draws[j], 0.025);
        out[j].hi = stats::quantile(draws[j], 0.975);
        out[j].excludes_zero = out[j].lo > 0.0 || out[j].hi < 0.0;
    }
    return out;
}

}  // namespace phenoatlas::eval

// synth.hpp
//
// Seeded synthetic cohorts with planted clusters, compositions, survival and
// subtype labels. Used as ground truth for end-to-end checks.
#pragma once

#include <phenoatlas/cohort_io.hpp>
#include <phenoatlas/common.hpp>
#include <phenoatlas/composition.hpp>
#include <phenoatlas/logistic.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace phenoatlas::synth {

struct SynthSpec {
    std::size_t n_patients = 100;
    std::size_t slides_per_patient = 1;
    std::size_t tiles_per_slide = 100;
    std::size_t c_true = 8;
    std::size_t dim = 64;
    double blob_sigma = 0.05;
    double blob_separation = 1.0;
    std::vector<double> gamma_true;  // empty = all zeros
    std::vector<double> beta_true;   // empty = all zeros
    double beta0_true = 0.0;
    double censor_rate = 0.3;
    double dirichlet_alpha = 1.0;
    double base_hazard = 1.0 / 24.0;  // events per month at x = 0
    std::uint64_t seed = 0;

    void validate() const {
        if (n_patients == 0 || slides_per_patient == 0 || tiles_per_slide == 0 || c_true == 0 || dim == 0)
            throw ValidationError("synthetic cohort counts must be positive");
        if (!(blob_separation > 0.0)) throw ValidationError("blob_separation must be positive");
        if (!(blob_sigma >= 0.0)) throw ValidationError("blob_sigma must be non-negative");
        if (!(dirichlet_alpha > 0.0)) throw ValidationError("dirichlet_alpha must be positive");
        if (!(base_hazard > 0.0)) throw ValidationError("base_hazard must be positive");
        if (!gamma_true.empty() && gamma_true.size() != c_true)
            throw ValidationError("gamma_true must have c_true entries");
        if (!beta_true.empty() && beta_true.size() != c_true)
            throw ValidationError("beta_true must have c_true entries");
        if (!(censor_rate >= 0.0 && censor_rate < 1.0))
            throw ValidationError("infeasible censor_rate " + std::to_string(censor_rate) + " (need 0 <= rate < 1)");
    }

    std::vector<double> gamma() const { return gamma_true.empty() ? std::vector<double>(c_true, 0.0) : gamma_true; }
    std::vector<double> beta() const { return beta_true.empty() ? std::vector<double>(c_true, 0.0) : beta_true; }
};

/// Patient-level draw: compositions, tile cluster labels, outcomes. No embeddings.
struct PatientDraw {
    std::vector<std::string> patient_ids;
    Matrix mixture;                         // planted Dirichlet proportions, n x c
    std::vector<std::vector<int>> labels;   // per patient, tile cluster labels in slide order
    CountsTable counts;                     // per patient
    Matrix clr_x;                           // clr of replaced empirical composition
    std::vector<double> hazard;             // exponential rate per patient
    std::vector<double> time;
    std::vector<int> event;
    std::vector<int> subtype;
    double censor_hazard = 0.0;
    double realized_censor_fraction = 0.0;
};

struct PlantedTruth {
    SynthSpec spec;
    Matrix means;                 // c x D
    std::vector<int> tile_labels; // aligned with the embedding rows
    PatientDraw patients;
};

struct Cohort {
    EmbeddingSet embeddings;
    CohortMetadata metadata;
    PlantedTruth truth;
};

namespace detail {

inline std::string padded(const char* prefix, std::size_t value, std::size_t max_value) {
    const std::size_t width = std::max<std::size_t>(4, std::to_string(max_value).size());
    const std::string digits = std::to_string(value);
    return prefix + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

/// Means at (sep / sqrt 2) e_j so every pair is exactly `sep` apart; with more
/// clusters than dimensions, random directions of the same norm.
inline Matrix planted_means(const SynthSpec& s) {
    Matrix m(s.c_true, s.dim);
    const double r = s.blob_separation / std::sqrt(2.0);
    if (s.c_true <= s.dim) {
        for (std::size_t j = 0; j < s.c_true; ++j) m(j, j) = r;
        return m;
    }
    Rng rng(derive_seed(s.seed, "means"));
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t j = 0; j < s.c_true; ++j) {
        double norm = 0.0;
        for (std::size_t d = 0; d < s.dim; ++d) {
            m(j, d) = g(rng);
            norm += m(j, d) * m(j, d);
        }
        norm = std::sqrt(norm);
        for (std::size_t d = 0; d < s.dim; ++d) m(j, d) *= r / norm;
    }
    return m;
}

/// Censoring hazard h such that mean_i h / (h + rate_i) equals `target`.
inline double calibrate_censoring(std::span<const double> rates, double target) {
    if (target <= 0.0) return 0.0;
    auto expected = [&](double h) {
        double s = 0.0;
        for (double r : rates) s += h / (h + r);
        return s / static_cast<double>(rates.size());
    };
    double lo = 0.0, hi = 1.0;
    while (expected(hi) < target) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (expected(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

inline PatientDraw draw_patients(const SynthSpec& s) {
    s.validate();
    const std::size_t n = s.n_patients, c = s.c_true;
    const std::size_t tiles = s.slides_per_patient * s.tiles_per_slide;
    Rng rng(derive_seed(s.seed, "patients"));
    std::gamma_distribution<double> gamma_draw(s.dirichlet_alpha, 1.0);

    PatientDraw d;
    d.mixture = Matrix(n, c);
    d.labels.resize(n);
    d.counts.clusters = c;
    for (std::size_t p = 0; p < n; ++p) {
        d.patient_ids.push_back(detail::padded("P", p + 1, n));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += d.mixture(p, j) = gamma_draw(rng);
        for (std::size_t j = 0; j < c; ++j) d.mixture(p, j) /= sum;
        std::discrete_distribution<int> pick(d.mixture.row(p), d.mixture.row(p) + c);
        d.labels[p].resize(tiles);
        for (auto& l : d.labels[p]) l = pick(rng);
    }
    d.counts.entity_ids = d.patient_ids;
    d.counts.counts.assign(n * c, 0);
    for (std::size_t p = 0; p < n; ++p)
        for (int l : d.labels[p]) ++d.counts.counts[p * c + static_cast<std::size_t>(l)];
    d.clr_x = compose(d.counts).clr_x;

    const auto gamma = s.gamma(), beta = s.beta();
    d.hazard.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        double lp = 0.0;
        for (std::size_t j = 0; j < c; ++j) lp += gamma[j] * d.clr_x(p, j);
        d.hazard[p] = s.base_hazard * std::exp(lp);
    }
    d.censor_hazard = detail::calibrate_censoring(d.hazard, s.censor_rate);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t censored = 0;
    for (std::size_t p = 0; p < n; ++p) {
        // inverse-CDF draws on (0, 1] keep times strictly positive
        const double t_event = -std::log(1.0 - unit(rng)) / d.hazard[p];
        const double u_cens = unit(rng);
        const double t_cens =
            d.censor_hazard > 0.0 ? -std::log(1.0 - u_cens) / d.censor_hazard : std::numeric_limits<double>::infinity();
        double u = s.beta0_true;
        for (std::size_t j = 0; j < c; ++j) u += beta[j] * d.clr_x(p, j);
        const int label = unit(rng) < logistic::sigmoid(u) ? 1 : 0;
        const bool event = t_event <= t_cens;
        d.time.push_back(std::max(event ? t_event : t_cens, 1e-9));
        d.event.push_back(event ? 1 : 0);
        d.subtype.push_back(label);
        censored += event ? 0 : 1;
    }
    d.realized_censor_fraction = static_cast<double>(censored) / static_cast<double>(n);
    return d;
}

inline Cohort generate(const SynthSpec& s) {
    Cohort out;
    out.truth.spec = s;
    out.truth.patients = draw_patients(s);
    out.truth.means = detail::planted_means(s);
    const auto& d = out.truth.patients;

    Rng rng(derive_seed(s.seed, "tiles"));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<float> v(s.dim);
    auto& e = out.embeddings;
    e.dim = s.dim;
    const std::size_t total = s.n_patients * s.slides_per_patient * s.tiles_per_slide;
    e.tile_ids.reserve(total);
    e.values.reserve(total * s.dim);
    out.truth.tile_labels.reserve(total);
    for (std::size_t p = 0; p < s.n_patients; ++p) {
        for (std::size_t sl = 0; sl < s.slides_per_patient; ++sl) {
            const std::string slide = d.patient_ids[p] + "-S" + std::to_string(sl + 1);
            for (std::size_t t = 0; t < s.tiles_per_slide; ++t) {
                const int label = d.labels[p][sl * s.tiles_per_slide + t];
                const double* mu = out.truth.means.row(static_cast<std::size_t>(label));
                for (std::size_t k = 0; k < s.dim; ++k)
                    v[k] = static_cast<float>(s.blob_sigma > 0.0 ? mu[k] + s.blob_sigma * noise(rng) : mu[k]);
                e.push_back(detail::padded((slide + "-T").c_str(), t + 1, s.tiles_per_slide), slide,
                            d.patient_ids[p], v);
                out.truth.tile_labels.push_back(label);
            }
        }
    }
    for (std::size_t p = 0; p < s.n_patients; ++p)
        out.metadata.add({d.patient_ids[p], d.subtype[p], d.time[p], d.event[p]});
    return out;
}

inline nlohmann::json spec_to_json(const SynthSpec& s) {
    return {{"n_patients", s.n_patients},
            {"slides_per_patient", s.slides_per_patient},
            {"tiles_per_slide", s.tiles_per_slide},
            {"c_true", s.c_true},
            {"dim", s.dim},
            {"blob_sigma", s.blob_sigma},
            {"blob_separation", s.blob_separation},
            {"gamma_true", s.gamma()},
            {"beta_true", s.beta()},
            {"beta0_true", s.beta0_true},
            {"censor_rate", s.censor_rate},
            {"dirichlet_alpha", s.dirichlet_alpha},
            {"base_hazard", s.base_hazard},
            {"seed", s.seed}};
}

inline nlohmann::json truth_to_json(const PlantedTruth& t) {
    nlohmann::json patients = nlohmann::json::array();
    const auto& d = t.patients;
    for (std::size_t p = 0; p < d.patient_ids.size(); ++p) {
        std::vector<std::int64_t> counts(d.counts.row(p).begin(), d.counts.row(p).end());
        std::vector<double> mix(d.mixture.row(p), d.mixture.row(p) + d.mixture.cols);
        patients.push_back({{"patient_id", d.patient_ids[p]},
                            {"mixture", mix},
                            {"counts", counts},
                            {"hazard", d.hazard[p]}});
    }
    std::vector<std::vector<double>> means;
    for (std::size_t j = 0; j < t.means.rows; ++j) means.emplace_back(t.means.row(j), t.means.row(j) + t.means.cols);
    return {{"spec", spec_to_json(t.spec)},
            {"means", means},
            {"censor_hazard", d.censor_hazard},
            {"realized_censor_fraction", d.realized_censor_fraction},
            {"patients", patients},
            {"tile_labels", t.tile_labels}};
}

inline void save_planted_truth(const std::string& path, const PlantedTruth& t) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << truth_to_json(t).dump(2) << '\n';
}

}  // namespace phenoatlas::synth

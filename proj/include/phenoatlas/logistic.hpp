// logistic.hpp
//
// L1-penalized logistic regression fitted by proximal gradient descent (ISTA)
// with backtracking. Objective: mean negative log-likelihood + lambda * |beta|_1,
// intercept unpenalized.
#pragma once

#include <phenoatlas/common.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace phenoatlas::logistic {

/// 1 / (1 + exp(-u)), evaluated without overflow for any finite u.
inline double sigmoid(double u) {
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

/// log(1 + exp(u)) without overflow.
inline double softplus(double u) { return u > 0.0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct LogisticFit {
    double beta0 = 0.0;
    std::vector<double> beta;
    std::vector<double> odds_ratios;
    double lambda_l1 = 0.0;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<double> objective_trace;  // objective after each accepted step, starting at the initial point
};

struct LogisticOptions {
    int max_iterations = 5000;
    double objective_tolerance = 1e-9;
    double step_tolerance = 1e-8;  // infinity norm of the proximal gradient mapping
    bool keep_trace = false;
};

namespace detail {

inline double smooth_loss(const Matrix& x, std::span<const int> y, double b0, std::span<const double> b,
                          std::vector<double>& margin) {
    const std::size_t n = x.rows;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double u = b0;
        const double* xi = x.row(i);
        for (std::size_t j = 0; j < x.cols; ++j) u += b[j] * xi[j];
        margin[i] = u;
        loss += softplus(u) - (y[i] ? u : 0.0);
    }
    return loss / static_cast<double>(n);
}

inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

}  // namespace detail

/// Gradient of the mean negative log-likelihood; element 0 is the intercept.
inline std::vector<double> smooth_gradient(const Matrix& x, std::span<const int> y, double b0,
                                           std::span<const double> b) {
    std::vector<double> margin(x.rows);
    detail::smooth_loss(x, y, b0, b, margin);
    std::vector<double> g(x.cols + 1, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        const double r = sigmoid(margin[i]) - (y[i] ? 1.0 : 0.0);
        g[0] += r;
        for (std::size_t j = 0; j < x.cols; ++j) g[j + 1] += r * x(i, j);
    }
    for (auto& v : g) v /= static_cast<double>(x.rows);
    return g;
}

inline double smooth_objective(const Matrix& x, std::span<const int> y, double b0, std::span<const double> b) {
    std::vector<double> margin(x.rows);
    return detail::smooth_loss(x, y, b0, b, margin);
}

inline LogisticFit fit_logistic(const Matrix& x, std::span<const int> y, double lambda_l1,
                                const LogisticOptions& opt = {}) {
    const std::size_t n = x.rows, p = x.cols;
    if (y.size() != n) throw ValidationError("label count does not match rows");
    if (n == 0) throw ValidationError("no training rows");
    if (lambda_l1 < 0.0) throw ValidationError("lambda must be non-negative");
    std::size_t pos = 0;
    for (int v : y) {
        if (v != 0 && v != 1) throw ValidationError("labels must be 0 or 1");
        pos += static_cast<std::size_t>(v);
    }
    if (pos == 0 || pos == n) throw ValidationError("both classes must be present");
    for (double v : x.data)
        if (!std::isfinite(v)) throw ValidationError("non-finite feature value");

    LogisticFit fit;
    fit.lambda_l1 = lambda_l1;
    std::vector<double> beta(p, 0.0), trial(p), margin(n);
    double b0 = 0.0;
    auto l1 = [&](std::span<const double> b) {
        double s = 0.0;
        for (double v : b) s += std::abs(v);
        return lambda_l1 * s;
    };
    double f = detail::smooth_loss(x, y, b0, beta, margin);
    double obj = f + l1(beta);
    if (opt.keep_trace) fit.objective_trace.push_back(obj);

    double lipschitz = 1.0;
    std::vector<double> grad(p + 1);
    for (int it = 0; it < opt.max_iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = sigmoid(margin[i]) - (y[i] ? 1.0 : 0.0);
            grad[0] += r;
            const double* xi = x.row(i);
            for (std::size_t j = 0; j < p; ++j) grad[j + 1] += r * xi[j];
        }
        for (auto& g : grad) g /= static_cast<double>(n);

        // let the step grow again after a cautious phase; backtracking keeps every accepted step a descent step
        lipschitz = std::max(lipschitz * 0.5, 1e-12);
        double trial_b0 = b0, trial_f = f, trial_obj = obj, step_norm = 0.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            trial_b0 = b0 - grad[0] / lipschitz;
            double lin = (trial_b0 - b0) * grad[0], sq = (trial_b0 - b0) * (trial_b0 - b0);
            step_norm = std::abs(trial_b0 - b0);
            for (std::size_t j = 0; j < p; ++j) {
                trial[j] = detail::soft_threshold(beta[j] - grad[j + 1] / lipschitz, lambda_l1 / lipschitz);
                const double d = trial[j] - beta[j];
                lin += d * grad[j + 1];
                sq += d * d;
                step_norm = std::max(step_norm, std::abs(d));
            }
            trial_f = detail::smooth_loss(x, y, trial_b0, trial, margin);
            if (trial_f <= f + lin + 0.5 * lipschitz * sq + 1e-15 * std::abs(f)) {
                trial_obj = trial_f + l1(trial);
                accepted = true;
                break;
            }
            lipschitz *= 2.0;
        }
        fit.iterations = it + 1;
        if (!accepted || trial_obj > obj) {
            // no representable descent left; restore margins of the current point and stop
            detail::smooth_loss(x, y, b0, beta, margin);
            fit.converged = accepted;
            break;
        }
        const double change = obj - trial_obj;
        b0 = trial_b0;
        beta = trial;
        f = trial_f;
        obj = trial_obj;
        if (opt.keep_trace) fit.objective_trace.push_back(obj);
        if (change < opt.objective_tolerance && lipschitz * step_norm < opt.step_tolerance) {
            fit.converged = true;
            break;
        }
    }

    fit.beta0 = b0;
    fit.beta = beta;
    fit.objective = obj;
    fit.odds_ratios.resize(p);
    for (std::size_t j = 0; j < p; ++j) fit.odds_ratios[j] = std::exp(beta[j]);
    return fit;
}

inline std::vector<double> predict_proba(const LogisticFit& fit, const Matrix& x) {
    if (x.cols != fit.beta.size()) throw ValidationError("dimension mismatch between model and features");
    std::vector<double> out(x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        double u = fit.beta0;
        for (std::size_t j = 0; j < x.cols; ++j) u += fit.beta[j] * x(i, j);
        out[i] = sigmoid(u);
    }
    return out;
}

inline nlohmann::json to_json(const LogisticFit& f) {
    nlohmann::json j;
    j["model"] = "l1_logistic_regression";
    j["beta0"] = f.beta0;
    j["beta"] = f.beta;
    j["odds_ratios"] = f.odds_ratios;
    j["lambda_l1"] = f.lambda_l1;
    j["objective"] = f.objective;
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    return j;
}

inline LogisticFit logistic_from_json(const nlohmann::json& j) {
    LogisticFit f;
    f.beta0 = j.at("beta0").get<double>();
    f.beta = j.at("beta").get<std::vector<double>>();
    f.odds_ratios = j.at("odds_ratios").get<std::vector<double>>();
    f.lambda_l1 = j.at("lambda_l1").get<double>();
    f.objective = j.at("objective").get<double>();
    f.converged = j.at("converged").get<bool>();
    f.iterations = j.at("iterations").get<int>();
    return f;
}

}  // namespace phenoatlas::logistic

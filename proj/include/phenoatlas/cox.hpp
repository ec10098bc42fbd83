// cox.hpp
//
// Cox proportional hazards on composition features: Efron/Breslow partial
// likelihood, Newton-Raphson fit with optional ridge, Wald inference, risk
// scores and median stratification.
#pragma once

#include <phenoatlas/common.hpp>
#include <phenoatlas/stats.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace phenoatlas::survival {

struct SurvivalDataset {
    Matrix x;                  // n x c covariates
    std::vector<double> time;  // > 0
    std::vector<int> event;    // 1 = event, 0 = censored

    std::size_t size() const { return time.size(); }
    std::size_t features() const { return x.cols; }

    std::size_t events() const {
        return static_cast<std::size_t>(std::count(event.begin(), event.end(), 1));
    }

    void validate() const {
        if (x.rows != time.size() || event.size() != time.size())
            throw ValidationError("survival dataset columns have different lengths");
        for (std::size_t i = 0; i < time.size(); ++i) {
            if (!(time[i] > 0.0) || !std::isfinite(time[i])) throw ValidationError("non-positive survival time");
            if (event[i] != 0 && event[i] != 1) throw ValidationError("event outside {0,1}");
        }
        for (double v : x.data)
            if (!std::isfinite(v)) throw ValidationError("non-finite covariate");
    }

    SurvivalDataset subset(const std::vector<std::size_t>& idx) const {
        SurvivalDataset out;
        out.x = x.select_rows(idx);
        for (auto i : idx) {
            out.time.push_back(time[i]);
            out.event.push_back(event[i]);
        }
        return out;
    }
};

enum class Ties { Efron, Breslow };

struct PartialLikelihood {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;  // second derivative (negative of observed information)
};

/// Log partial likelihood and its derivatives at `beta`.
/// The linear predictor is shifted by its maximum before exponentiation; the
/// shift cancels exactly between numerator and risk-set sums.
inline PartialLikelihood partial_likelihood(const SurvivalDataset& data, std::span<const double> beta,
                                            Ties ties = Ties::Efron, bool derivatives = true) {
    const std::size_t n = data.size(), p = data.features();
    if (beta.size() != p) throw ValidationError("coefficient length does not match feature count");

    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(data.x.data.data(),
                                                                                              static_cast<Eigen::Index>(n),
                                                                                              static_cast<Eigen::Index>(p));
    Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(p));
    Eigen::VectorXd eta = n ? Eigen::VectorXd(X * b) : Eigen::VectorXd();
    const double shift = n ? eta.maxCoeff() : 0.0;

    PartialLikelihood out;
    if (derivatives) {
        out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
        out.hessian = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    }

    // descending time; risk-set sums accumulate as time decreases
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto c) {
        if (data.time[a] != data.time[c]) return data.time[a] > data.time[c];
        return a < c;
    });

    double s0 = 0.0;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    Eigen::VectorXd t1(p), xsum(p), num1(p);
    Eigen::MatrixXd t2(p, p), num2(p, p);

    std::size_t pos = 0;
    while (pos < n) {
        const double t = data.time[order[pos]];
        std::size_t end = pos;
        double t0 = 0.0;
        std::size_t d = 0;
        double eta_sum = 0.0;
        if (derivatives) {
            t1.setZero();
            t2.setZero();
            xsum.setZero();
        }
        // every subject with this time joins the risk set; events also form the tie block
        for (; end < n && data.time[order[end]] == t; ++end) {
            const auto i = order[end];
            const double r = std::exp(eta[static_cast<Eigen::Index>(i)] - shift);
            s0 += r;
            if (derivatives) {
                const auto xi = X.row(static_cast<Eigen::Index>(i)).transpose();
                s1 += r * xi;
                s2.noalias() += r * xi * xi.transpose();
                if (data.event[i]) {
                    t1 += r * xi;
                    t2.noalias() += r * xi * xi.transpose();
                    xsum += xi;
                }
            }
            if (data.event[i]) {
                ++d;
                t0 += r;
                eta_sum += eta[static_cast<Eigen::Index>(i)] - shift;
            }
        }
        if (d > 0) {
            out.value += eta_sum;
            if (derivatives) out.gradient += xsum;
            for (std::size_t l = 0; l < d; ++l) {
                const double frac = ties == Ties::Efron ? static_cast<double>(l) / static_cast<double>(d) : 0.0;
                const double den = s0 - frac * t0;
                out.value -= std::log(den);
                if (derivatives) {
                    num1 = s1 - frac * t1;
                    num2 = s2 - frac * t2;
                    out.gradient -= num1 / den;
                    out.hessian -= num2 / den - (num1 * num1.transpose()) / (den * den);
                }
            }
        }
        pos = end;
    }
    if (!std::isfinite(out.value)) throw ValidationError("partial likelihood is not finite");
    return out;
}

inline double partial_loglik(const SurvivalDataset& data, std::span<const double> beta, Ties ties = Ties::Efron) {
    return partial_likelihood(data, beta, ties, false).value;
}

struct CoxOptions {
    double ridge = 1e-6;
    Ties ties = Ties::Efron;
    int max_iterations = 100;
    double gradient_tolerance = 1e-8;
};

struct CoxFit {
    std::vector<double> gamma;
    std::vector<double> se;
    std::vector<double> hr;
    std::vector<std::array<double, 2>> ci95;
    std::vector<double> wald_p;
    double loglik = 0.0;  // unpenalized log partial likelihood at the estimate
    double ridge = 0.0;
    Ties ties = Ties::Efron;
    bool converged = false;
    int iterations = 0;
    std::size_t n = 0;
    std::size_t events = 0;
};

// two-sided 95% normal quantile as conventionally rounded
inline constexpr double kZ975 = 1.96;

/// Hazard ratio exp(g) with its 95% Wald interval exp(g -/+ z * se).
inline std::array<double, 3> hazard_ratio_ci(double g, double se) {
    return {std::exp(g), std::exp(g - kZ975 * se), std::exp(g + kZ975 * se)};
}

/// Newton-Raphson with step halving on the (ridge-penalized) Efron log partial likelihood.
inline CoxFit fit_cox(const SurvivalDataset& data, const CoxOptions& opt = {}) {
    data.validate();
    const std::size_t p = data.features();
    const std::size_t events = data.events();
    if (events == 0) throw ValidationError("no events");
    if (events < 2) throw ValidationError("at least two events are required to fit a Cox model");
    if (opt.ridge < 0.0) throw ValidationError("ridge must be non-negative");
    if (p >= events && opt.ridge == 0.0)
        throw ValidationError("more features than events; a positive ridge is required");

    auto penalized = [&](const std::vector<double>& b) {
        auto pl = partial_likelihood(data, b, opt.ties);
        Eigen::Map<const Eigen::VectorXd> bv(b.data(), static_cast<Eigen::Index>(p));
        pl.value -= 0.5 * opt.ridge * bv.squaredNorm();
        pl.gradient -= opt.ridge * bv;
        pl.hessian.diagonal().array() -= opt.ridge;
        return pl;
    };

    CoxFit fit;
    fit.ridge = opt.ridge;
    fit.ties = opt.ties;
    fit.n = data.size();
    fit.events = events;
    std::vector<double> beta(p, 0.0);
    auto cur = penalized(beta);

    for (int it = 0; it < opt.max_iterations; ++it) {
        if (cur.gradient.cwiseAbs().maxCoeff() < opt.gradient_tolerance) {
            fit.converged = true;
            break;
        }
        fit.iterations = it + 1;
        const Eigen::MatrixXd info = -cur.hessian;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()))
            throw ValidationError("singular information matrix; use a positive ridge");
        const Eigen::VectorXd step = ldlt.solve(cur.gradient);

        double scale = 1.0;
        bool improved = false;
        for (int half = 0; half < 30; ++half) {
            std::vector<double> trial(p);
            for (std::size_t j = 0; j < p; ++j) trial[j] = beta[j] + scale * step[static_cast<Eigen::Index>(j)];
            auto next = penalized(trial);
            if (next.value >= cur.value) {
                beta = std::move(trial);
                cur = std::move(next);
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;  // no ascent possible at machine precision
    }
    if (!fit.converged && cur.gradient.cwiseAbs().maxCoeff() < opt.gradient_tolerance) fit.converged = true;

    // Covariance from the unpenalized observed information. Composition
    // features are rank deficient (rows sum to zero), so use the pseudo-inverse:
    // that is the covariance of the identified sum-to-zero contrast.
    const auto unpen = partial_likelihood(data, beta, opt.ties);
    const Eigen::MatrixXd info = -unpen.hessian;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    const Eigen::VectorXd lambda = eig.eigenvalues();
    const double cutoff = 1e-10 * std::max(1e-300, lambda.cwiseAbs().maxCoeff());
    Eigen::VectorXd inv_lambda(lambda.size());
    for (Eigen::Index k = 0; k < lambda.size(); ++k) inv_lambda[k] = lambda[k] > cutoff ? 1.0 / lambda[k] : 0.0;
    const Eigen::MatrixXd cov = eig.eigenvectors() * inv_lambda.asDiagonal() * eig.eigenvectors().transpose();

    fit.gamma = beta;
    fit.loglik = unpen.value;
    for (std::size_t j = 0; j < p; ++j) {
        const double var = cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
        const double se = var > 0.0 ? std::sqrt(var) : 0.0;
        const auto [hr, lo, hi] = hazard_ratio_ci(beta[j], se);
        fit.se.push_back(se);
        fit.hr.push_back(hr);
        fit.ci95.push_back({lo, hi});
        fit.wald_p.push_back(se > 0.0 ? stats::chi2_sf_1df((beta[j] / se) * (beta[j] / se)) : 1.0);
    }
    return fit;
}

/// Linear predictor gamma^T x for each row.
inline std::vector<double> risk_scores(const CoxFit& fit, const Matrix& x) {
    if (x.cols != fit.gamma.size()) throw ValidationError("dimension mismatch between model and features");
    std::vector<double> out(x.rows, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out[i] += fit.gamma[j] * x(i, j);
    return out;
}

enum class RiskGroup { Low = 0, High = 1 };

/// Score strictly above the median -> High; at or below -> Low.
inline std::vector<RiskGroup> stratify_median(std::span<const double> scores) {
    if (scores.size() < 2) throw ValidationError("median stratification needs at least two scores");
    const double med = stats::median(std::vector<double>(scores.begin(), scores.end()));
    std::vector<RiskGroup> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > med ? RiskGroup::High : RiskGroup::Low;
    return out;
}

inline nlohmann::json to_json(const CoxFit& f, std::span<const std::string> feature_names = {}) {
    nlohmann::json j;
    j["model"] = "cox_proportional_hazards";
    j["ties"] = f.ties == Ties::Efron ? "efron" : "breslow";
    j["ridge"] = f.ridge;
    j["n"] = f.n;
    j["events"] = f.events;
    j["loglik"] = f.loglik;
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    nlohmann::json coefs = nlohmann::json::array();
    for (std::size_t k = 0; k < f.gamma.size(); ++k) {
        coefs.push_back({{"feature", k < feature_names.size() ? feature_names[k] : "hpc_" + std::to_string(k)},
                         {"gamma", f.gamma[k]},
                         {"se", f.se[k]},
                         {"hr", f.hr[k]},
                         {"ci95", {f.ci95[k][0], f.ci95[k][1]}},
                         {"wald_p", f.wald_p[k]}});
    }
    j["coefficients"] = coefs;
    return j;
}

inline CoxFit cox_from_json(const nlohmann::json& j) {
    CoxFit f;
    f.ties = j.at("ties").get<std::string>() == "breslow" ? Ties::Breslow : Ties::Efron;
    f.ridge = j.at("ridge").get<double>();
    f.n = j.at("n").get<std::size_t>();
    f.events = j.at("events").get<std::size_t>();
    f.loglik = j.at("loglik").get<double>();
    f.converged = j.at("converged").get<bool>();
    f.iterations = j.at("iterations").get<int>();
    for (const auto& c : j.at("coefficients")) {
        f.gamma.push_back(c.at("gamma").get<double>());
        f.se.push_back(c.at("se").get<double>());
        f.hr.push_back(c.at("hr").get<double>());
        f.ci95.push_back({c.at("ci95")[0].get<double>(), c.at("ci95")[1].get<double>()});
        f.wald_p.push_back(c.at("wald_p").get<double>());
    }
    return f;
}

}  // namespace phenoatlas::survival

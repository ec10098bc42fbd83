#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace phenoatlas;
using namespace phenoatlas::logistic;

namespace {

struct Toy {
    Matrix x;
    std::vector<int> y;
};

Toy random_toy(std::size_t n, std::size_t p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Toy t{Matrix(n, p), {}};
    for (auto& v : t.x.data) v = g(rng);
    for (std::size_t i = 0; i < n; ++i) {
        double u = 0.3;
        for (std::size_t j = 0; j < p; ++j) u += (j % 2 ? -0.8 : 0.6) * t.x(i, j);
        t.y.push_back(std::uniform_real_distribution<double>(0, 1)(rng) < sigmoid(u));
    }
    return t;
}

}  // namespace

TEST(Logistic, SigmoidBasics) {
    EXPECT_EQ(sigmoid(0.0), 0.5);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-30, 30);
    for (int i = 0; i < 100; ++i) {
        const double v = u(rng);
        EXPECT_NEAR(sigmoid(v) + sigmoid(-v), 1.0, 1e-15);
    }
    EXPECT_GE(sigmoid(-1000.0), 0.0);
    EXPECT_LT(sigmoid(-1000.0), 1e-300);
    EXPECT_EQ(sigmoid(1000.0), 1.0);
}

TEST(Logistic, LargeLambdaGivesInterceptOnly) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto t = random_toy(60, 5, seed);
        const auto fit = fit_logistic(t.x, t.y, 1e3);
        for (double b : fit.beta) EXPECT_EQ(b, 0.0);
        const double p = static_cast<double>(std::count(t.y.begin(), t.y.end(), 1)) / 60.0;
        EXPECT_NEAR(fit.beta0, logit(p), 1e-6);
    }
    Toy balanced = random_toy(40, 3, 9);
    for (std::size_t i = 0; i < 40; ++i) balanced.y[i] = static_cast<int>(i % 2);
    EXPECT_NEAR(fit_logistic(balanced.x, balanced.y, 1e3).beta0, 0.0, 1e-6);
}

TEST(Logistic, SeparableToyReachesPerfectTrainingAccuracy) {
    Matrix x(8, 2);
    x.data = {2, 1, 1.5, 2, 3, 0.5, 2.5, 2.5, -2, -1, -1.5, -2, -3, -0.5, -2.5, -2.5};
    const std::vector<int> y{1, 1, 1, 1, 0, 0, 0, 0};
    const auto fit = fit_logistic(x, y, 0.01);
    const auto p = predict_proba(fit, x);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(p[i] >= 0.5, y[i] == 1);
}

TEST(Logistic, DuplicatingSamplesLeavesFitUnchanged) {
    const auto t = random_toy(50, 3, 4);
    Toy twice{Matrix(100, 3), {}};
    for (int r = 0; r < 2; ++r)
        for (std::size_t i = 0; i < 50; ++i) {
            std::copy(t.x.row(i), t.x.row(i) + 3, twice.x.row(r * 50 + i));
            twice.y.push_back(t.y[i]);
        }
    const auto a = fit_logistic(t.x, t.y, 0.02), b = fit_logistic(twice.x, twice.y, 0.02);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(a.beta[j], b.beta[j], 1e-6);
    EXPECT_NEAR(a.beta0, b.beta0, 1e-6);
}

TEST(Logistic, ObjectiveNeverIncreases) {
    LogisticOptions opt;
    opt.keep_trace = true;
    int violations = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto t = random_toy(40 + seed, 6, 200 + seed);
        const auto fit = fit_logistic(t.x, t.y, 0.001 * static_cast<double>(seed % 7), opt);
        for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
            violations += fit.objective_trace[i] > fit.objective_trace[i - 1];
    }
    EXPECT_EQ(violations, 0);
}

TEST(Logistic, SmoothGradientMatchesFiniteDifferences) {
    const auto t = random_toy(30, 4, 77);
    const std::vector<double> b{0.2, -0.4, 0.1, 0.7};
    const double b0 = -0.3;
    const auto g = smooth_gradient(t.x, t.y, b0, b);
    auto f = [&](const std::vector<double>& v) {
        return smooth_objective(t.x, t.y, v[0], std::vector<double>(v.begin() + 1, v.end()));
    };
    std::vector<double> at{b0};
    at.insert(at.end(), b.begin(), b.end());
    const auto fd = oracle::fd_gradient(f, at);
    for (std::size_t j = 0; j < fd.size(); ++j) EXPECT_NEAR(g[j], fd[j], 1e-6 * std::max(1.0, std::abs(fd[j])));
}

TEST(Logistic, SoftThresholdOnOrthogonalDesign) {
    // feature j is +a on its own positive group and -a on its negative group, 0 elsewhere;
    // blocks are disjoint so the columns are orthogonal and the intercept is exactly 0 at the optimum
    const double a = 1.0;
    const std::vector<double> frac{0.8, 0.6, 0.3, 0.5};
    const std::size_t group = 20;  // rows per signed group
    const std::size_t n = frac.size() * 2 * group;
    for (double lambda : {0.0, 0.005, 0.02, 0.06}) {
        Matrix x(n, frac.size());
        std::vector<int> y(n);
        for (std::size_t j = 0; j < frac.size(); ++j) {
            const std::size_t ones = static_cast<std::size_t>(std::lround(frac[j] * group));
            for (std::size_t r = 0; r < group; ++r) {
                const std::size_t pos = j * 2 * group + r, neg = pos + group;
                x(pos, j) = a;
                x(neg, j) = -a;
                y[pos] = r < ones;
                y[neg] = r >= ones;  // mirror image keeps the intercept score at zero
            }
        }
        const auto fit = fit_logistic(x, y, lambda);
        EXPECT_NEAR(fit.beta0, 0.0, 1e-6);
        for (std::size_t j = 0; j < frac.size(); ++j) {
            const double p = frac[j];
            const double shrink = lambda * static_cast<double>(n) / (2.0 * a * static_cast<double>(group));
            double want = 0.0;
            if (std::abs(p - 0.5) > shrink) want = logit(p - (p > 0.5 ? shrink : -shrink)) / a;
            EXPECT_NEAR(fit.beta[j], want, 1e-6) << "lambda " << lambda << " feature " << j;
            if (want == 0.0 && lambda > 0.0) {
                EXPECT_EQ(fit.beta[j], 0.0);
            }
        }
    }
}

TEST(Logistic, PredictionsAndErrors) {
    LogisticFit zero;
    zero.beta = {0.0, 0.0};
    Matrix x(3, 2, 1.5);
    for (double p : predict_proba(zero, x)) EXPECT_EQ(p, 0.5);
    LogisticFit pos;
    pos.beta = {0.7, -0.2};
    pos.beta0 = 0.1;
    Matrix lo(1, 2), hi(1, 2);
    lo.data = {0.0, 1.0};
    hi.data = {1.0, 1.0};
    EXPECT_LT(predict_proba(pos, lo)[0], predict_proba(pos, hi)[0]);
    EXPECT_DOUBLE_EQ(predict_proba(pos, hi)[0], sigmoid(0.1 + 0.7 - 0.2));
    const std::vector<int> one_class{1, 1, 1};
    EXPECT_THROW(fit_logistic(x, one_class, 0.1), ValidationError);
}

// stats.hpp
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace phenoatlas::stats {

/// Upper tail of the chi-square distribution with one degree of freedom.
inline double chi2_sf_1df(double x) {
    if (!(x > 0.0)) return 1.0;
    return std::erfc(std::sqrt(0.5 * x));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double mean(std::span<const double> v) {
    if (v.empty()) return std::nan("");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double stddev(std::span<const double> v) {
    if (v.size() < 2) return v.empty() ? std::nan("") : 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Linear-interpolated quantile (Hyndman-Fan type 7) of an unsorted sample.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson: size mismatch");
    const double ma = mean(a), mb = mean(b);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

/// Asymptotic Kolmogorov distribution tail P(K > x).
inline double kolmogorov_sf(double x) {
    if (x <= 0.0) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
    double statistic;
    double p_value;
};

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
inline KsResult ks_uniform(std::vector<double> sample) {
    if (sample.empty()) throw std::invalid_argument("ks_uniform: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double u = std::clamp(sample[i], 0.0, 1.0);
        d = std::max({d, (static_cast<double>(i) + 1.0) / n - u, u - static_cast<double>(i) / n});
    }
    // Stephens' small-sample correction
    const double sn = std::sqrt(n);
    return {d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)};
}

/// Adjusted Rand index between two labelings of the same items.
template <class A, class B>
double adjusted_rand_index(std::span<const A> x, std::span<const B> y) {
    if (x.size() != y.size()) throw std::invalid_argument("ARI: size mismatch");
    std::map<std::pair<A, B>, std::int64_t> joint;
    std::map<A, std::int64_t> rows;
    std::map<B, std::int64_t> cols;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ++joint[{x[i], y[i]}];
        ++rows[x[i]];
        ++cols[y[i]];
    }
    auto comb2 = [](std::int64_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); };
    double sum_ij = 0, sum_a = 0, sum_b = 0;
    for (auto& [k, v] : joint) sum_ij += comb2(v);
    for (auto& [k, v] : rows) sum_a += comb2(v);
    for (auto& [k, v] : cols) sum_b += comb2(v);
    const double total = comb2(static_cast<std::int64_t>(x.size()));
    const double expected = sum_a * sum_b / total;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_ij - expected) / (max_index - expected);
}

}  // namespace phenoatlas::stats

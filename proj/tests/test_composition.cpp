#include "support.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

using namespace phenoatlas;

namespace {

std::vector<double> freq(std::vector<std::int64_t> c) { return frequencies(c); }

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(Composition, Frequencies) {
    const auto f = freq({2, 1, 0});
    EXPECT_DOUBLE_EQ(f[0], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(f[1], 1.0 / 3.0);
    EXPECT_EQ(f[2], 0.0);
    EXPECT_EQ(freq({5, 5}), (std::vector<double>{0.5, 0.5}));
    EXPECT_THROW(freq({0, 0}), ValidationError);
}

TEST(Composition, MultiplicativeReplacementExamples) {
    const std::vector<double> a{0.5, 0.0, 0.5};
    const auto r = multiplicative_replacement(a, 0.125);
    EXPECT_DOUBLE_EQ(r[0], 0.4375);
    EXPECT_DOUBLE_EQ(r[1], 0.125);
    EXPECT_DOUBLE_EQ(r[2], 0.4375);
    EXPECT_NEAR(sum(r), 1.0, 1e-15);

    const std::vector<double> b{1.0, 0.0, 0.0};
    const auto rb = multiplicative_replacement(b, 0.1);
    EXPECT_NEAR(rb[0], 0.8, 1e-15);
    EXPECT_DOUBLE_EQ(rb[1], 0.1);
    EXPECT_DOUBLE_EQ(rb[2], 0.1);

    const std::vector<double> c{0.2, 0.3, 0.5};
    EXPECT_EQ(multiplicative_replacement(c, 0.01), c);
}

TEST(Composition, ReplacementRejectsBadDelta) {
    const std::vector<double> a{0.5, 0.0, 0.5};
    EXPECT_THROW(multiplicative_replacement(a, 0.0), ValidationError);
    EXPECT_THROW(multiplicative_replacement(a, 0.5), ValidationError);
    const std::vector<double> not_unit{0.5, 0.0, 0.4};
    EXPECT_THROW(multiplicative_replacement(not_unit, 0.01), ValidationError);
}

TEST(Composition, ClrExamples) {
    const std::vector<double> a{0.5, 0.25, 0.25};
    const auto x = clr(a);
    EXPECT_NEAR(x[0], 0.4621, 1e-4);
    EXPECT_NEAR(x[1], -0.2310, 1e-4);
    EXPECT_NEAR(x[2], -0.2310, 1e-4);
    // independent evaluation: log(a_j) - mean(log a)
    const double g = std::cbrt(0.5 * 0.25 * 0.25);
    EXPECT_NEAR(x[0], std::log(0.5 / g), 1e-14);

    const std::vector<double> uniform(7, 1.0 / 7.0);
    for (double v : clr(uniform)) EXPECT_NEAR(v, 0.0, 1e-15);

    const std::vector<double> perm{0.25, 0.5, 0.25};
    const auto y = clr(perm);
    EXPECT_DOUBLE_EQ(y[0], x[1]);
    EXPECT_DOUBLE_EQ(y[1], x[0]);
    EXPECT_THROW(clr(std::vector<double>{0.5, 0.0, 0.5}), ValidationError);
}

TEST(Composition, ZeroSumAndUnitSumProperties) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> width(2, 40), count(0, 30);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::int64_t> c(static_cast<std::size_t>(width(rng)));
        for (auto& v : c) v = count(rng);
        c[0] += 1;
        std::int64_t total = 0;
        for (auto v : c) total += v;
        const auto f = frequencies(c);
        const auto r = multiplicative_replacement(f, DeltaPolicy{}.for_row(total, c.size()));
        EXPECT_NEAR(sum(r), 1.0, 1e-12);
        EXPECT_NEAR(sum(clr(r)), 0.0, 1e-9);
    }
}

TEST(Composition, ScaleInvariance) {
    const std::vector<std::int64_t> c{3, 1, 4, 1, 5};
    std::vector<std::int64_t> scaled;
    for (auto v : c) scaled.push_back(v * 7);
    const auto a = clr(frequencies(c)), b = clr(frequencies(scaled));
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
}

TEST(Composition, LogDomainGeometricMeanForManyParts) {
    const std::size_t c = 10000;
    std::vector<double> a(c, 1e-12);
    a[0] = 1.0 - 1e-12 * static_cast<double>(c - 1);
    const auto x = clr(a);
    for (double v : x) ASSERT_TRUE(std::isfinite(v));
    EXPECT_NEAR(sum(x), 0.0, 1e-9);
}

TEST(Composition, DefaultDeltaPolicy) {
    EXPECT_DOUBLE_EQ(DeltaPolicy{}.for_row(100, 10), 0.005);
    EXPECT_DOUBLE_EQ(DeltaPolicy{}.for_row(3, 10), 0.05);  // more clusters than tiles
    EXPECT_DOUBLE_EQ(DeltaPolicy{0.01}.for_row(100, 10), 0.01);
}

TEST(Composition, ComposeTableAndCsvRoundTrip) {
    CountsTable t;
    t.entity_ids = {"s1", "s2"};
    t.clusters = 3;
    t.counts = {2, 1, 0, 0, 0, 4};
    const auto comp = compose(t);
    EXPECT_EQ(comp.clr_x.rows, 2u);
    EXPECT_DOUBLE_EQ(comp.replaced(0, 2), 0.5 / 3.0);
    std::stringstream buf;
    write_feature_csv(buf, comp.entity_ids, comp.clr_x);
    const auto back = read_feature_csv(buf);
    EXPECT_EQ(back.ids, comp.entity_ids);
    EXPECT_EQ(back.values.data, comp.clr_x.data);
    t.counts = {0, 0, 0, 1, 1, 1};
    EXPECT_THROW(compose(t), ValidationError);
}

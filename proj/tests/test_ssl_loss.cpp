#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace phenoatlas;
using namespace phenoatlas::ssl;

namespace {

Matrix random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(n, d);
    for (auto& v : m.data) v = g(rng);
    return m;
}

Matrix square(std::size_t d, std::initializer_list<double> v) {
    Matrix m(d, d);
    m.data.assign(v.begin(), v.end());
    return m;
}

}  // namespace

TEST(Barlow, IdenticalViewsHaveZeroLoss) {
    const auto z = random_matrix(64, 8, 1);
    const auto c = cross_correlation({z, z});
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(c(i, i), 1.0, 1e-12);
    // different latent columns stay correlated by chance; the on-diagonal term vanishes
    double on = 0.0;
    for (std::size_t i = 0; i < 8; ++i) on += (1 - c(i, i)) * (1 - c(i, i));
    EXPECT_NEAR(on, 0.0, 1e-20);
    EXPECT_EQ(barlow_loss(square(2, {1, 0, 0, 1}), 0.005), 0.0);
}

TEST(Barlow, SignFlipAndIndependence) {
    const auto z = random_matrix(100, 3, 2);
    Matrix neg = z;
    for (auto& v : neg.data) v = -v;
    const auto c = cross_correlation({z, neg});
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(c(i, i), -1.0, 1e-12);

    const auto a = random_matrix(20000, 4, 3), b = random_matrix(20000, 4, 4);
    const auto ind = cross_correlation({a, b});
    for (double v : ind.data) EXPECT_LT(std::abs(v), 0.05);
}

TEST(Barlow, HandExamples) {
    EXPECT_NEAR(barlow_loss(square(2, {1, 0.5, 0.5, 1}), 0.005), 0.0025, 1e-15);
    EXPECT_NEAR(barlow_loss(square(2, {0, 0, 0, 0}), 0.005), 2.0, 1e-15);
    EXPECT_NEAR(barlow_loss(square(2, {0.5, 0.2, -0.2, 0.5}), 0.1), 0.5 + 0.1 * 0.08, 1e-15);
}

TEST(Barlow, PermutingRowsJointlyLeavesCorrelationUnchanged) {
    const auto z = random_matrix(50, 5, 5), zp = random_matrix(50, 5, 6);
    std::vector<std::size_t> order(50);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), std::mt19937_64(7));
    const auto a = cross_correlation({z, zp});
    const auto b = cross_correlation({z.select_rows(order), zp.select_rows(order)});
    for (std::size_t k = 0; k < a.data.size(); ++k) EXPECT_NEAR(a.data[k], b.data[k], 1e-12);
}

TEST(Barlow, GradientMatchesFiniteDifferences) {
    const auto c = cross_correlation({random_matrix(30, 4, 8), random_matrix(30, 4, 9)});
    const auto grad = barlow_gradient(c, 0.005);
    auto f = [&](const std::vector<double>& v) {
        Matrix m(4, 4);
        m.data = v;
        return barlow_loss(m, 0.005);
    };
    const auto fd = oracle::fd_gradient(f, c.data);
    for (std::size_t k = 0; k < fd.size(); ++k) EXPECT_NEAR(grad.data[k], fd[k], 1e-8);
}

TEST(Barlow, Errors) {
    EXPECT_THROW(cross_correlation({random_matrix(10, 3, 1), random_matrix(10, 4, 1)}), ValidationError);
    EXPECT_THROW(cross_correlation({random_matrix(1, 3, 1), random_matrix(1, 3, 1)}), ValidationError);
    Matrix flat(5, 2, 1.0);
    EXPECT_THROW(cross_correlation({flat, random_matrix(5, 2, 1)}), ValidationError);
}

TEST(Barlow, MatrixCsv) {
    std::stringstream with_header("a,b\n1,2\n3,4\n"), bare("1,2\n3,4\n");
    const auto a = read_matrix_csv(with_header), b = read_matrix_csv(bare);
    EXPECT_EQ(a.rows, 2u);
    EXPECT_EQ(a.data, b.data);
    std::stringstream ragged("1,2\n3\n");
    EXPECT_THROW(read_matrix_csv(ragged), FormatError);
}

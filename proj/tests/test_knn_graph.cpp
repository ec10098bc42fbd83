#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace phenoatlas;

namespace {

std::set<std::size_t> neighbour_set(const NeighborGraph& g, std::size_t i) {
    auto nb = g.adjacent(i);
    return {nb.begin(), nb.end()};
}

}  // namespace

TEST(Subsample, IdentityAtFullSize) {
    const auto e = support::points(support::random_points(20, 3, 1));
    EXPECT_EQ(subsample(e, 20, 9), e);
    EXPECT_EQ(subsample(e, 50, 9), e);
    EXPECT_THROW(subsample(e, 0, 9), ValidationError);
}

TEST(Subsample, DistinctDeterministicSeedSensitive) {
    const auto idx = subsample_indices(1000, 250, 42);
    EXPECT_EQ(idx.size(), 250u);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 250u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(idx, subsample_indices(1000, 250, 42));
    EXPECT_NE(idx, subsample_indices(1000, 250, 43));
}

TEST(Knn, OneDimensionalExample) {
    const auto e = support::points({{0.0}, {1.0}, {3.0}});
    const auto g = build_knn(e, 1);
    EXPECT_EQ(neighbour_set(g, 0), (std::set<std::size_t>{1}));
    EXPECT_EQ(neighbour_set(g, 1), (std::set<std::size_t>{0, 2}));
    EXPECT_EQ(neighbour_set(g, 2), (std::set<std::size_t>{1}));
    EXPECT_DOUBLE_EQ(g.total_weight, 2.0);
}

TEST(Knn, CompleteGraphAtNMinusOne) {
    const auto e = support::points(support::random_points(9, 4, 2));
    const auto g = build_knn(e, 8);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(g.adjacent(i).size(), 8u);
    EXPECT_DOUBLE_EQ(g.total_weight, 36.0);
}

TEST(Knn, DuplicatePointsAreMutualNeighbours) {
    const auto e = support::points({{1.0, 1.0}, {5.0, 5.0}, {1.0, 1.0}, {9.0, 0.0}});
    const auto lists = knn_lists(e, 1);
    EXPECT_EQ(lists[0][0], 2u);
    EXPECT_EQ(lists[2][0], 0u);
    const auto g = build_knn(e, 1);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(neighbour_set(g, i).count(i), 0u);
}

TEST(Knn, TiesBrokenByLowerIndex) {
    // node 0 is equidistant from 1, 2, 3
    const auto e = support::points({{0.0}, {1.0}, {-1.0}, {1.0}});
    EXPECT_EQ(knn_lists(e, 1)[0][0], 1u);
    EXPECT_EQ(knn_lists(e, 2)[0], (std::vector<std::uint32_t>{1, 2}));
}

TEST(Knn, Errors) {
    const auto e = support::points({{0.0}, {1.0}});
    EXPECT_THROW(build_knn(e, 2), ValidationError);
    EXPECT_THROW(build_knn(EmbeddingSet{}, 1), ValidationError);
}

TEST(Knn, MatchesBruteForceOracle) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const std::size_t n = 60 + 40 * seed, k = 3 + seed;
        auto pts = support::random_points(n, 5, 100 + seed);
        // force some exact ties
        pts[1] = pts[0];
        pts[7] = pts[3];
        const auto want = oracle::knn_union(pts, k);
        const auto g = build_knn(support::points(pts), k, static_cast<unsigned>(1 + seed % 3));
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_EQ(neighbour_set(g, i), want[i]) << "node " << i << " seed " << seed;
            EXPECT_GE(g.adjacent(i).size(), k);
        }
    }
}

TEST(Knn, ParallelEqualsSequential) {
    const auto e = support::points(support::random_points(700, 8, 3));
    const auto a = build_knn(e, 10, 1), b = build_knn(e, 10, 4);
    EXPECT_EQ(a.offsets, b.offsets);
    EXPECT_EQ(a.neighbors, b.neighbors);
    EXPECT_EQ(a.weights, b.weights);
}

TEST(Knn, SymmetricAndHalfDegreeSum) {
    const auto g = build_knn(support::points(support::random_points(300, 6, 4)), 7);
    double degree_sum = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        for (auto j : g.adjacent(i)) EXPECT_EQ(neighbour_set(g, j).count(i), 1u);
        degree_sum += g.weighted_degree(i);
    }
    EXPECT_DOUBLE_EQ(g.total_weight, degree_sum / 2.0);
}

TEST(Knn, PermutationEquivariance) {
    auto pts = support::random_points(120, 4, 8);
    std::vector<std::size_t> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
    std::vector<std::vector<double>> shuffled(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) shuffled[perm[i]] = pts[i];
    const auto g = build_knn(support::points(pts), 5);
    const auto h = build_knn(support::points(shuffled), 5);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::set<std::size_t> mapped;
        for (auto j : g.adjacent(i)) mapped.insert(perm[j]);
        EXPECT_EQ(neighbour_set(h, perm[i]), mapped);
    }
}

TEST(EdgeList, RoundTripAndUnweightedHeader) {
    const auto g = build_knn(support::points(support::random_points(40, 3, 5)), 4);
    std::stringstream buf;
    write_edge_list_csv(buf, g);
    const auto back = read_edge_list_csv(buf, g.n);
    EXPECT_EQ(back.neighbors, g.neighbors);
    EXPECT_EQ(back.offsets, g.offsets);
    std::istringstream plain("src,dst\n0,1\n1,2\n");
    const auto p = read_edge_list_csv(plain);
    EXPECT_EQ(p.n, 3u);
    EXPECT_DOUBLE_EQ(p.total_weight, 2.0);
    std::istringstream bad("a,b\n");
    EXPECT_THROW(read_edge_list_csv(bad), FormatError);
    std::istringstream loop("src,dst\n1,1\n");
    EXPECT_THROW(read_edge_list_csv(loop), ValidationError);
}

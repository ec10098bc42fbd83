// knn_graph.hpp
//
// Exact Euclidean k-nearest-neighbour graph, symmetrized by union.
#pragma once

#include <phenoatlas/cohort_io.hpp>
#include <phenoatlas/common.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

namespace phenoatlas {

/// Undirected weighted graph in CSR form. Each undirected edge is stored in
/// both endpoints' lists; lists are sorted by neighbour index.
struct NeighborGraph {
    std::size_t n = 0;
    std::vector<std::size_t> offsets{0};
    std::vector<std::uint32_t> neighbors;
    std::vector<double> weights;
    double total_weight = 0.0;  // m: sum of undirected edge weights

    std::span<const std::uint32_t> adjacent(std::size_t i) const {
        return {neighbors.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
    std::span<const double> adjacent_weights(std::size_t i) const {
        return {weights.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
    std::size_t degree_count(std::size_t i) const { return offsets[i + 1] - offsets[i]; }

    double weighted_degree(std::size_t i) const {
        double s = 0.0;
        for (double w : adjacent_weights(i)) s += w;
        return s;
    }

    struct Edge {
        std::uint32_t src, dst;
        double weight;
        friend bool operator==(const Edge&, const Edge&) = default;
    };

    /// Each undirected edge once with src < dst, sorted.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (std::size_t i = 0; i < n; ++i) {
            auto nb = adjacent(i);
            auto w = adjacent_weights(i);
            for (std::size_t k = 0; k < nb.size(); ++k)
                if (nb[k] > i) out.push_back({static_cast<std::uint32_t>(i), nb[k], w[k]});
        }
        return out;
    }

    /// Builds a graph from undirected edges. Duplicate edges have their weights summed.
    static NeighborGraph from_edges(std::size_t n, std::vector<Edge> edges) {
        for (auto& e : edges) {
            if (e.src == e.dst) throw ValidationError("self-loop on node " + std::to_string(e.src));
            if (e.src >= n || e.dst >= n) throw ValidationError("edge endpoint out of range");
            if (!(e.weight > 0.0)) throw ValidationError("edge weights must be positive");
            if (e.src > e.dst) std::swap(e.src, e.dst);
        }
        std::sort(edges.begin(), edges.end(),
                  [](const Edge& a, const Edge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
        std::vector<Edge> merged;
        for (const auto& e : edges) {
            if (!merged.empty() && merged.back().src == e.src && merged.back().dst == e.dst)
                merged.back().weight += e.weight;
            else
                merged.push_back(e);
        }

        NeighborGraph g;
        g.n = n;
        std::vector<std::size_t> deg(n, 0);
        for (const auto& e : merged) {
            ++deg[e.src];
            ++deg[e.dst];
            g.total_weight += e.weight;
        }
        g.offsets.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) g.offsets[i + 1] = g.offsets[i] + deg[i];
        g.neighbors.resize(g.offsets[n]);
        g.weights.resize(g.offsets[n]);
        std::vector<std::size_t> fill(g.offsets.begin(), g.offsets.end() - 1);
        // two passes over (src, dst)-sorted edges: lower neighbours first, then higher, so lists come out sorted
        for (const auto& e : merged) {
            g.neighbors[fill[e.dst]] = e.src;
            g.weights[fill[e.dst]++] = e.weight;
        }
        for (const auto& e : merged) {
            g.neighbors[fill[e.src]] = e.dst;
            g.weights[fill[e.src]++] = e.weight;
        }
        return g;
    }
};

/// Uniform sample of `m` tile indices without replacement, in original order.
inline std::vector<std::size_t> subsample_indices(std::size_t total, std::size_t m, std::uint64_t seed) {
    if (m == 0) throw ValidationError("subsample size must be positive");
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    if (m >= total) return all;
    // partial Fisher-Yates, then restore original order
    Rng rng(seed);
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(all[i], all[pick(rng)]);
    }
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
}

inline EmbeddingSet subsample(const EmbeddingSet& embeddings, std::size_t m, std::uint64_t seed) {
    const auto idx = subsample_indices(embeddings.size(), m, seed);
    return embeddings.select(idx);
}

/// Directed exact kNN lists: row i holds the k nearest other points, ordered by
/// (squared distance, index).
inline std::vector<std::vector<std::uint32_t>> knn_lists(const EmbeddingSet& embeddings, std::size_t k,
                                                          unsigned jobs = 1) {
    const std::size_t n = embeddings.size();
    if (n == 0) throw ValidationError("empty embedding set");
    if (k == 0) throw ValidationError("k must be positive");
    if (k >= n) throw ValidationError("k (" + std::to_string(k) + ") must be smaller than the node count (" +
                                      std::to_string(n) + ")");
    const std::size_t dim = embeddings.dim;
    const std::vector<double> x(embeddings.values.begin(), embeddings.values.end());

    std::vector<std::vector<std::uint32_t>> lists(n);
    auto work = [&](std::size_t begin, std::size_t end) {
        std::vector<std::pair<double, std::uint32_t>> cand(n - 1);
        for (std::size_t i = begin; i < end; ++i) {
            const double* xi = x.data() + i * dim;
            std::size_t c = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double* xj = x.data() + j * dim;
                double d2 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double diff = xi[d] - xj[d];
                    d2 += diff * diff;
                }
                cand[c++] = {d2, static_cast<std::uint32_t>(j)};
            }
            auto kth = cand.begin() + static_cast<std::ptrdiff_t>(k);
            std::nth_element(cand.begin(), kth - 1, cand.end());
            std::sort(cand.begin(), kth);
            auto& out = lists[i];
            out.resize(k);
            for (std::size_t t = 0; t < k; ++t) out[t] = cand[t].second;
        }
    };

    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (jobs == 1) {
        work(0, n);
    } else {
        // static block partition: each row is computed by exactly one thread, so output is schedule-independent
        std::vector<std::thread> pool;
        const std::size_t block = (n + jobs - 1) / jobs;
        for (unsigned t = 0; t < jobs; ++t) {
            const std::size_t b = t * block, e = std::min(n, b + block);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return lists;
}

/// Union-symmetrized, unweighted kNN graph (every retained edge has weight 1).
inline NeighborGraph build_knn(const EmbeddingSet& embeddings, std::size_t k, unsigned jobs = 1) {
    const auto lists = knn_lists(embeddings, k, jobs);
    std::vector<NeighborGraph::Edge> edges;
    edges.reserve(lists.size() * k);
    for (std::size_t i = 0; i < lists.size(); ++i)
        for (auto j : lists[i]) {
            const auto a = static_cast<std::uint32_t>(std::min<std::size_t>(i, j));
            const auto b = static_cast<std::uint32_t>(std::max<std::size_t>(i, j));
            edges.push_back({a, b, 1.0});
        }
    std::sort(edges.begin(), edges.end(),
              [](const auto& p, const auto& q) { return std::tie(p.src, p.dst) < std::tie(q.src, q.dst); });
    edges.erase(std::unique(edges.begin(), edges.end(),
                            [](const auto& p, const auto& q) { return p.src == q.src && p.dst == q.dst; }),
                edges.end());
    return NeighborGraph::from_edges(lists.size(), std::move(edges));
}

inline void write_edge_list_csv(std::ostream& os, const NeighborGraph& g) {
    os << "src,dst,weight\n";
    for (const auto& e : g.edges()) os << e.src << ',' << e.dst << ',' << detail::number_repr(e.weight) << '\n';
}

inline void save_edge_list(const std::string& path, const NeighborGraph& g) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    write_edge_list_csv(os, g);
}

/// Reads `src,dst[,weight]` (weight defaults to 1); node count is one past the
/// largest index unless `n` is given.
inline NeighborGraph read_edge_list_csv(std::istream& in, std::size_t n = 0) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("malformed header: empty edge list");
    const auto header = detail::trim(line);
    const bool weighted = header == "src,dst,weight";
    if (!weighted && header != "src,dst") throw FormatError("malformed header: expected src,dst[,weight]");
    std::vector<NeighborGraph::Edge> edges;
    std::size_t rowno = 0, max_node = 0;
    while (std::getline(in, line)) {
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        ++rowno;
        const auto f = detail::split_csv(t);
        if (f.size() != (weighted ? 3u : 2u))
            throw FormatError("inconsistent row width at row " + std::to_string(rowno));
        auto s = detail::parse_number<std::uint32_t>(f[0]);
        auto d = detail::parse_number<std::uint32_t>(f[1]);
        auto w = weighted ? detail::parse_number<double>(f[2]) : std::optional<double>(1.0);
        if (!s || !d || !w) throw FormatError("bad edge at row " + std::to_string(rowno));
        edges.push_back({*s, *d, *w});
        max_node = std::max<std::size_t>(max_node, std::max(*s, *d));
    }
    if (n == 0) n = edges.empty() ? 0 : max_node + 1;
    return NeighborGraph::from_edges(n, std::move(edges));
}

inline NeighborGraph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_edge_list_csv(in);
}

}  // namespace phenoatlas

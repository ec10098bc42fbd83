// leiden.hpp
//
// Leiden community detection maximizing modularity with a resolution parameter.
// Three phases per outer iteration: fast local moving, refinement inside each
// community (randomized, quality-non-decreasing merges of well-connected
// singletons), and aggregation of the refined partition.
#pragma once

#include <phenoatlas/common.hpp>
#include <phenoatlas/knn_graph.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace phenoatlas {

struct Partition {
    std::vector<std::uint32_t> assignment;  // node -> community id in [0, count)
    std::size_t count = 0;
    double quality = 0.0;  // modularity at the resolution used to fit it
};

/// Configuration-model modularity with resolution gamma:
///   Q = sum_c [ L_c / m - gamma * (d_c / 2m)^2 ]
inline double modularity(const NeighborGraph& g, std::span<const std::uint32_t> assignment, double gamma) {
    if (assignment.size() != g.n) throw ValidationError("partition size does not match graph");
    if (!(g.total_weight > 0.0)) throw ValidationError("modularity of an empty graph (m = 0)");
    std::uint32_t max_label = 0;
    for (auto c : assignment) max_label = std::max(max_label, c);
    // Summation order depends only on node order and sorted terms, so relabeling a
    // partition never changes Q in the last bit.
    std::vector<double> degree(static_cast<std::size_t>(max_label) + 1, 0.0);
    double internal = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto ci = assignment[i];
        auto nb = g.adjacent(i);
        auto w = g.adjacent_weights(i);
        for (std::size_t k = 0; k < nb.size(); ++k) {
            degree[ci] += w[k];
            if (nb[k] > i && assignment[nb[k]] == ci) internal += w[k];
        }
    }
    const double m = g.total_weight;
    for (auto& d : degree) d = (d / (2.0 * m)) * (d / (2.0 * m));
    std::sort(degree.begin(), degree.end());
    double expected = 0.0;
    for (double v : degree) expected += v;
    return internal / m - gamma * expected;
}

inline double modularity(const NeighborGraph& g, const Partition& p, double gamma) {
    return modularity(g, p.assignment, gamma);
}

struct LeidenOptions {
    double gamma = 3.0;
    std::uint64_t seed = 0;
    int max_iterations = 100;
    double randomness = 0.01;        // temperature of the refinement merge choice, in edge-weight units
    double min_improvement = 1e-12;  // a move must raise Q by more than this
};

struct LeidenTrace {
    std::vector<double> quality;  // modularity of the flat partition after each outer iteration
    std::vector<std::size_t> moves;
    int iterations = 0;
};

namespace detail {

// Weighted graph with explicit self-loop weights, used for aggregated levels.
struct WorkGraph {
    std::size_t n = 0;
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> nbr;
    std::vector<double> w;
    std::vector<double> self;    // internal weight, each undirected edge counted once
    std::vector<double> degree;  // sum of incident weights + 2 * self
    double m = 0.0;

    static WorkGraph from(const NeighborGraph& g) {
        WorkGraph out;
        out.n = g.n;
        out.offsets = g.offsets;
        out.nbr = g.neighbors;
        out.w = g.weights;
        out.self.assign(g.n, 0.0);
        out.degree.resize(g.n);
        for (std::size_t i = 0; i < g.n; ++i) out.degree[i] = g.weighted_degree(i);
        out.m = g.total_weight;
        return out;
    }
};

// Relabels to 0..c-1 in order of first appearance; returns c.
inline std::size_t renumber(std::vector<std::uint32_t>& labels) {
    std::vector<std::uint32_t> map(labels.size() + 1, UINT32_MAX);
    std::uint32_t next = 0;
    for (auto& l : labels) {
        if (l >= map.size()) map.resize(static_cast<std::size_t>(l) + 1, UINT32_MAX);
        if (map[l] == UINT32_MAX) map[l] = next++;
        l = map[l];
    }
    return next;
}

inline std::size_t move_nodes_fast(const WorkGraph& g, std::vector<std::uint32_t>& comm, const LeidenOptions& opt,
                                   Rng& rng) {
    const std::size_t n = g.n;
    const double inv2m = 1.0 / (2.0 * g.m);
    std::vector<double> tot(n, 0.0);
    std::vector<std::size_t> csize(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        tot[comm[i]] += g.degree[i];
        ++csize[comm[i]];
    }
    std::vector<std::uint32_t> empty;
    for (std::size_t c = n; c-- > 0;)
        if (csize[c] == 0) empty.push_back(static_cast<std::uint32_t>(c));

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);
    std::deque<std::uint32_t> queue(order.begin(), order.end());
    std::vector<char> queued(n, 1);

    std::vector<double> w_to(n, 0.0);
    std::vector<char> seen(n, 0);
    std::vector<std::uint32_t> touched;
    std::size_t moves = 0;

    while (!queue.empty()) {
        const auto v = queue.front();
        queue.pop_front();
        queued[v] = 0;
        const auto cur = comm[v];
        const double kv = g.degree[v];

        touched.clear();
        touched.push_back(cur);
        seen[cur] = 1;
        for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
            const auto c = comm[g.nbr[e]];
            if (!seen[c]) {
                seen[c] = 1;
                touched.push_back(c);
            }
            w_to[c] += g.w[e];
        }

        tot[cur] -= kv;
        const double stay = w_to[cur] - opt.gamma * kv * tot[cur] * inv2m;
        std::uint32_t best = cur;
        double best_gain = stay;
        for (auto c : touched) {
            const double gain = w_to[c] - opt.gamma * kv * tot[c] * inv2m;
            if (gain > best_gain) {
                best_gain = gain;
                best = c;
            }
        }
        // an empty community has gain 0; only distinct from staying when cur has other members
        if (csize[cur] > 1 && best_gain < 0.0 && !empty.empty()) {
            best_gain = 0.0;
            best = empty.back();
        }
        if ((best_gain - stay) / g.m <= opt.min_improvement) best = cur;

        tot[best] += kv;
        if (best != cur) {
            if (!empty.empty() && empty.back() == best) empty.pop_back();
            --csize[cur];
            ++csize[best];
            if (csize[cur] == 0) empty.push_back(cur);
            comm[v] = best;
            ++moves;
            for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
                const auto u = g.nbr[e];
                if (!queued[u] && comm[u] != best) {
                    queued[u] = 1;
                    queue.push_back(u);
                }
            }
        }
        for (auto c : touched) {
            w_to[c] = 0.0;
            seen[c] = 0;
        }
    }
    return moves;
}

// Refines each community of `comm` by merging singletons into well-connected
// sub-clusters of the same community. Every refined cluster is connected.
inline std::vector<std::uint32_t> refine(const WorkGraph& g, const std::vector<std::uint32_t>& comm,
                                         const LeidenOptions& opt, Rng& rng) {
    const std::size_t n = g.n;
    const double inv2m = 1.0 / (2.0 * g.m);
    std::vector<std::uint32_t> refined(n);
    std::iota(refined.begin(), refined.end(), 0u);
    std::vector<double> tot(g.degree);  // refined cluster degree
    std::vector<std::size_t> rsize(n, 1);
    std::vector<double> comm_tot(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) comm_tot[comm[i]] += g.degree[i];
    // external weight of each refined cluster towards the rest of its parent community
    std::vector<double> ext(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e)
            if (comm[g.nbr[e]] == comm[i]) ext[i] += g.w[e];

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> w_to(n, 0.0);
    std::vector<char> seen(n, 0);
    std::vector<std::uint32_t> touched;
    std::vector<std::uint32_t> cand;
    std::vector<double> cand_gain;
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    for (auto v : order) {
        const auto rv = refined[v];
        if (rsize[rv] != 1) continue;
        const auto parent = comm[v];
        const double kv = g.degree[v];
        if (ext[rv] < opt.gamma * kv * (comm_tot[parent] - kv) * inv2m) continue;

        touched.clear();
        for (std::size_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
            const auto u = g.nbr[e];
            if (comm[u] != parent) continue;
            const auto r = refined[u];
            if (r == rv) continue;
            if (!seen[r]) {
                seen[r] = 1;
                touched.push_back(r);
            }
            w_to[r] += g.w[e];
        }

        cand.assign(1, rv);  // staying alone, gain 0
        cand_gain.assign(1, 0.0);
        for (auto r : touched) {
            const bool well_connected = ext[r] >= opt.gamma * tot[r] * (comm_tot[parent] - tot[r]) * inv2m;
            if (!well_connected) continue;
            const double gain = w_to[r] - opt.gamma * kv * tot[r] * inv2m;
            if (gain >= 0.0) {
                cand.push_back(r);
                cand_gain.push_back(gain);
            }
        }

        std::uint32_t chosen = rv;
        if (cand.size() > 1) {
            const double top = *std::max_element(cand_gain.begin(), cand_gain.end());
            double total = 0.0;
            for (auto& gval : cand_gain) {
                gval = std::exp((gval - top) / opt.randomness);
                total += gval;
            }
            double x = unif(rng) * total;
            chosen = cand.back();
            for (std::size_t t = 0; t < cand.size(); ++t) {
                x -= cand_gain[t];
                if (x < 0.0) {
                    chosen = cand[t];
                    break;
                }
            }
        }

        if (chosen != rv) {
            ext[chosen] = ext[chosen] + ext[rv] - 2.0 * w_to[chosen];
            tot[chosen] += kv;
            tot[rv] = 0.0;
            ext[rv] = 0.0;
            rsize[rv] = 0;
            ++rsize[chosen];
            refined[v] = chosen;
        }
        for (auto r : touched) {
            w_to[r] = 0.0;
            seen[r] = 0;
        }
    }
    return refined;
}

// Collapses each cluster of `labels` (contiguous 0..c-1) into one node.
inline WorkGraph aggregate(const WorkGraph& g, const std::vector<std::uint32_t>& labels, std::size_t c) {
    WorkGraph out;
    out.n = c;
    out.m = g.m;
    out.self.assign(c, 0.0);
    out.degree.assign(c, 0.0);
    out.offsets.assign(c + 1, 0);

    std::vector<std::vector<std::uint32_t>> members(c);
    for (std::size_t i = 0; i < g.n; ++i) {
        members[labels[i]].push_back(static_cast<std::uint32_t>(i));
        out.self[labels[i]] += g.self[i];
        out.degree[labels[i]] += g.degree[i];
    }
    std::vector<double> w_to(c, 0.0);
    std::vector<char> seen(c, 0);
    std::vector<std::uint32_t> touched;
    for (std::size_t r = 0; r < c; ++r) {
        touched.clear();
        for (auto i : members[r])
            for (std::size_t e = g.offsets[i]; e < g.offsets[i + 1]; ++e) {
                const auto s = labels[g.nbr[e]];
                if (s == r) {
                    out.self[r] += 0.5 * g.w[e];  // seen from both endpoints
                    continue;
                }
                if (!seen[s]) {
                    seen[s] = 1;
                    touched.push_back(s);
                }
                w_to[s] += g.w[e];
            }
        std::sort(touched.begin(), touched.end());
        for (auto s : touched) {
            out.nbr.push_back(s);
            out.w.push_back(w_to[s]);
            w_to[s] = 0.0;
            seen[s] = 0;
        }
        out.offsets[r + 1] = out.nbr.size();
    }
    return out;
}

// Splits every community into its connected components in the original graph.
inline void split_disconnected(const NeighborGraph& g, std::vector<std::uint32_t>& assignment) {
    std::vector<std::uint32_t> out(g.n, UINT32_MAX);
    std::uint32_t next = 0;
    std::vector<std::uint32_t> stack;
    for (std::size_t s = 0; s < g.n; ++s) {
        if (out[s] != UINT32_MAX) continue;
        out[s] = next;
        stack.assign(1, static_cast<std::uint32_t>(s));
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (auto u : g.adjacent(v))
                if (out[u] == UINT32_MAX && assignment[u] == assignment[v]) {
                    out[u] = next;
                    stack.push_back(u);
                }
        }
        ++next;
    }
    assignment = std::move(out);
}

// Canonical labels: communities ordered by decreasing size, ties by smallest member.
inline std::size_t canonical_labels(std::vector<std::uint32_t>& assignment) {
    const std::size_t c = renumber(assignment);  // first-appearance order = smallest member order
    std::vector<std::size_t> size(c, 0);
    for (auto a : assignment) ++size[a];
    std::vector<std::uint32_t> order(c);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return size[a] > size[b]; });
    std::vector<std::uint32_t> rank(c);
    for (std::size_t r = 0; r < c; ++r) rank[order[r]] = static_cast<std::uint32_t>(r);
    for (auto& a : assignment) a = rank[a];
    return c;
}

}  // namespace detail

/// Runs Leiden from the singleton partition. The result's communities are
/// connected and its quality is at least that of the singleton partition.
inline Partition leiden_cluster(const NeighborGraph& graph, const LeidenOptions& opt = {},
                                LeidenTrace* trace = nullptr) {
    if (graph.n == 0) throw ValidationError("cannot cluster an empty graph");
    if (!(opt.gamma > 0.0)) throw ValidationError("resolution gamma must be positive");
    if (opt.max_iterations < 1) throw ValidationError("max_iterations must be positive");

    Partition result;
    if (!(graph.total_weight > 0.0)) {
        // no edges: every node is its own community
        result.assignment.resize(graph.n);
        std::iota(result.assignment.begin(), result.assignment.end(), 0u);
        result.count = graph.n;
        result.quality = 0.0;
        return result;
    }

    Rng rng(opt.seed);
    detail::WorkGraph g = detail::WorkGraph::from(graph);
    std::vector<std::uint32_t> node_of(graph.n);  // original node -> aggregate node
    std::iota(node_of.begin(), node_of.end(), 0u);
    std::vector<std::uint32_t> comm(graph.n);
    std::iota(comm.begin(), comm.end(), 0u);

    LeidenTrace local;
    LeidenTrace& tr = trace ? *trace : local;
    tr = {};
    std::vector<std::uint32_t> flat(graph.n);
    auto flat_quality = [&] {
        for (std::size_t i = 0; i < graph.n; ++i) flat[i] = comm[node_of[i]];
        detail::renumber(flat);
        return modularity(graph, flat, opt.gamma);
    };

    // Each level moves nodes, refines, and aggregates. When a pass of levels
    // reaches a graph whose nodes are its communities, restart on the original
    // graph from the flattened partition; stop once a pass no longer raises Q.
    double pass_start = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        const std::size_t moves = detail::move_nodes_fast(g, comm, opt, rng);
        const std::size_t c = detail::renumber(comm);
        const double q = flat_quality();
        if (!tr.quality.empty() && q < tr.quality.back())
            throw std::logic_error("leiden: modularity decreased between iterations");
        tr.quality.push_back(q);
        tr.moves.push_back(moves);
        tr.iterations = iter + 1;
        if (c == g.n) {
            if (!(q > pass_start + opt.min_improvement)) break;
            pass_start = q;
            g = detail::WorkGraph::from(graph);
            comm = flat;
            std::iota(node_of.begin(), node_of.end(), 0u);
            continue;
        }

        std::vector<std::uint32_t> refined = detail::refine(g, comm, opt, rng);
        const std::size_t r = detail::renumber(refined);
        detail::WorkGraph next = detail::aggregate(g, refined, r);
        std::vector<std::uint32_t> next_comm(r);
        for (std::size_t i = 0; i < g.n; ++i) next_comm[refined[i]] = comm[i];
        for (auto& a : node_of) a = refined[a];
        g = std::move(next);
        comm = std::move(next_comm);
    }

    result.assignment.resize(graph.n);
    for (std::size_t i = 0; i < graph.n; ++i) result.assignment[i] = comm[node_of[i]];
    detail::split_disconnected(graph, result.assignment);
    result.count = detail::canonical_labels(result.assignment);
    result.quality = modularity(graph, result, opt.gamma);
    if (!tr.quality.empty() && result.quality < tr.quality.back())
        throw std::logic_error("leiden: connectivity split decreased modularity");
    tr.quality.push_back(result.quality);
    return result;
}

inline void write_partition_csv(std::ostream& os, std::span<const std::string> tile_ids, const Partition& p) {
    if (tile_ids.size() != p.assignment.size()) throw ValidationError("partition size does not match tile list");
    os << "tile_id,hpc_id\n";
    for (std::size_t i = 0; i < tile_ids.size(); ++i) os << tile_ids[i] << ',' << p.assignment[i] << '\n';
}

inline void save_partition(const std::string& path, std::span<const std::string> tile_ids, const Partition& p) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    write_partition_csv(os, tile_ids, p);
}

/// Reads `tile_id,hpc_id` rows.
inline std::pair<std::vector<std::string>, std::vector<std::uint32_t>> read_assignment_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "tile_id,hpc_id")
        throw FormatError("malformed header: expected tile_id,hpc_id");
    std::vector<std::string> ids;
    std::vector<std::uint32_t> labels;
    std::size_t rowno = 0;
    while (std::getline(in, line)) {
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        ++rowno;
        const auto f = detail::split_csv(t);
        if (f.size() != 2) throw FormatError("inconsistent row width at row " + std::to_string(rowno));
        auto h = detail::parse_number<std::uint32_t>(f[1]);
        if (!h) throw FormatError("bad hpc_id at row " + std::to_string(rowno));
        ids.emplace_back(detail::trim(f[0]));
        labels.push_back(*h);
    }
    return {std::move(ids), std::move(labels)};
}

}  // namespace phenoatlas

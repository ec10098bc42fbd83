// atlas.hpp
//
// Cluster dictionary (centroids of the training-fold partition), nearest-centroid
// assignment, and per-slide / per-patient cluster counts.
#pragma once

#include <phenoatlas/cohort_io.hpp>
#include <phenoatlas/common.hpp>
#include <phenoatlas/leiden.hpp>

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace phenoatlas {

struct AtlasProvenance {
    std::uint64_t seed = 0;
    std::size_t k = 0;
    double gamma = 0.0;
    std::size_t subsample = 0;
    std::optional<int> fold;
    std::vector<std::string> training_patients;  // sorted

    friend bool operator==(const AtlasProvenance&, const AtlasProvenance&) = default;
};

struct AtlasModel {
    std::size_t clusters = 0;
    std::size_t dim = 0;
    std::vector<double> centroids;  // clusters x dim, row-major
    AtlasProvenance provenance;

    std::span<const double> centroid(std::size_t j) const { return {centroids.data() + j * dim, dim}; }

    /// Throws ProvenanceError if any of `patients` contributed tiles to the fit.
    void check_not_trained_on(std::span<const std::string> patients) const {
        for (const auto& p : patients)
            if (std::binary_search(provenance.training_patients.begin(), provenance.training_patients.end(), p))
                throw ProvenanceError("atlas" +
                                      (provenance.fold ? " for fold " + std::to_string(*provenance.fold) : std::string()) +
                                      " was fitted on tiles of patient '" + p + "', which is being scored");
    }

    friend bool operator==(const AtlasModel&, const AtlasModel&) = default;
};

/// Per-cluster mean of the embeddings; training patients are recorded in the provenance.
inline AtlasModel fit_centroids(const EmbeddingSet& embeddings, const Partition& partition,
                                AtlasProvenance provenance = {}) {
    if (partition.assignment.size() != embeddings.size())
        throw ValidationError("partition covers " + std::to_string(partition.assignment.size()) +
                              " nodes but the embedding set has " + std::to_string(embeddings.size()) + " tiles");
    if (partition.count == 0) throw ValidationError("partition has no communities");
    AtlasModel atlas;
    atlas.clusters = partition.count;
    atlas.dim = embeddings.dim;
    atlas.centroids.assign(atlas.clusters * atlas.dim, 0.0);
    std::vector<std::size_t> members(atlas.clusters, 0);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        const auto c = partition.assignment[i];
        if (c >= atlas.clusters) throw ValidationError("community id out of range");
        ++members[c];
        auto v = embeddings.vector(i);
        double* mu = atlas.centroids.data() + c * atlas.dim;
        for (std::size_t d = 0; d < atlas.dim; ++d) mu[d] += v[d];
    }
    for (std::size_t c = 0; c < atlas.clusters; ++c) {
        if (members[c] == 0) throw ValidationError("empty cluster " + std::to_string(c));
        double* mu = atlas.centroids.data() + c * atlas.dim;
        for (std::size_t d = 0; d < atlas.dim; ++d) mu[d] /= static_cast<double>(members[c]);
    }
    std::set<std::string> patients(embeddings.patient_ids.begin(), embeddings.patient_ids.end());
    provenance.training_patients.assign(patients.begin(), patients.end());
    atlas.provenance = std::move(provenance);
    return atlas;
}

/// Index of the Euclidean-nearest centroid for every tile; ties go to the lower index.
inline std::vector<std::uint32_t> assign(const AtlasModel& atlas, const EmbeddingSet& embeddings, unsigned jobs = 1) {
    if (atlas.clusters == 0) throw ValidationError("empty atlas");
    if (embeddings.dim != atlas.dim)
        throw ValidationError("dimension mismatch: atlas D=" + std::to_string(atlas.dim) +
                              ", embeddings D=" + std::to_string(embeddings.dim));
    std::vector<std::uint32_t> out(embeddings.size());
    auto work = [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            auto z = embeddings.vector(i);
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            for (std::size_t c = 0; c < atlas.clusters; ++c) {
                const double* mu = atlas.centroids.data() + c * atlas.dim;
                double d2 = 0.0;
                for (std::size_t d = 0; d < atlas.dim; ++d) {
                    const double diff = static_cast<double>(z[d]) - mu[d];
                    d2 += diff * diff;
                }
                if (d2 < best) {
                    best = d2;
                    arg = static_cast<std::uint32_t>(c);
                }
            }
            out[i] = arg;
        }
    };
    const std::size_t n = embeddings.size();
    jobs = std::max(1u, jobs);
    if (jobs == 1 || n < 2 * jobs) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t block = (n + jobs - 1) / jobs;
        for (unsigned t = 0; t < jobs; ++t) {
            const std::size_t b = t * block, e = std::min(n, b + block);
            if (b < e) pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

enum class Grouping { Slide, Patient };

/// Integer count matrix n_{s,j}: one row per entity (first-appearance order), one column per cluster.
struct CountsTable {
    std::vector<std::string> entity_ids;
    std::size_t clusters = 0;
    std::vector<std::int64_t> counts;  // entities x clusters

    std::span<const std::int64_t> row(std::size_t i) const { return {counts.data() + i * clusters, clusters}; }

    std::int64_t row_total(std::size_t i) const {
        std::int64_t s = 0;
        for (auto v : row(i)) s += v;
        return s;
    }

    std::optional<std::size_t> index_of(const std::string& id) const {
        auto it = std::find(entity_ids.begin(), entity_ids.end(), id);
        if (it == entity_ids.end()) return std::nullopt;
        return static_cast<std::size_t>(it - entity_ids.begin());
    }

    /// Rows for the given entities, in that order.
    CountsTable select(std::span<const std::string> ids) const {
        std::unordered_map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < entity_ids.size(); ++i) index.emplace(entity_ids[i], i);
        CountsTable out;
        out.clusters = clusters;
        for (const auto& id : ids) {
            auto it = index.find(id);
            if (it == index.end()) throw ValidationError("no counts for entity '" + id + "'");
            out.entity_ids.push_back(id);
            auto r = row(it->second);
            out.counts.insert(out.counts.end(), r.begin(), r.end());
        }
        return out;
    }

    friend bool operator==(const CountsTable&, const CountsTable&) = default;
};

inline CountsTable cluster_counts(std::span<const std::uint32_t> mapping, const EmbeddingSet& embeddings,
                                  std::size_t clusters, Grouping grouping) {
    if (mapping.size() != embeddings.size()) throw ValidationError("mapping does not cover the embedding set");
    const auto& keys = grouping == Grouping::Slide ? embeddings.slide_ids : embeddings.patient_ids;
    CountsTable t;
    t.clusters = clusters;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < mapping.size(); ++i) {
        if (mapping[i] >= clusters) throw ValidationError("cluster id out of range at tile " + embeddings.tile_ids[i]);
        auto [it, fresh] = index.emplace(keys[i], t.entity_ids.size());
        if (fresh) {
            t.entity_ids.push_back(keys[i]);
            t.counts.resize(t.counts.size() + clusters, 0);
        }
        ++t.counts[it->second * clusters + mapping[i]];
    }
    return t;
}

// ---------------------------------------------------------------------------
// Serialization: one line of JSON header, then clusters*dim little-endian f64.

inline nlohmann::json provenance_to_json(const AtlasProvenance& p) {
    nlohmann::json j;
    j["seed"] = p.seed;
    j["k"] = p.k;
    j["gamma"] = p.gamma;
    j["subsample"] = p.subsample;
    j["fold"] = p.fold ? nlohmann::json(*p.fold) : nlohmann::json(nullptr);
    j["training_patients"] = p.training_patients;
    return j;
}

inline AtlasProvenance provenance_from_json(const nlohmann::json& j) {
    AtlasProvenance p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.k = j.at("k").get<std::size_t>();
    p.gamma = j.at("gamma").get<double>();
    p.subsample = j.at("subsample").get<std::size_t>();
    if (!j.at("fold").is_null()) p.fold = j.at("fold").get<int>();
    p.training_patients = j.at("training_patients").get<std::vector<std::string>>();
    std::sort(p.training_patients.begin(), p.training_patients.end());
    return p;
}

inline void write_atlas(std::ostream& os, const AtlasModel& a) {
    nlohmann::json h;
    h["format"] = "phenoatlas-atlas";
    h["version"] = 1;
    h["clusters"] = a.clusters;
    h["dim"] = a.dim;
    h["provenance"] = provenance_to_json(a.provenance);
    os << h.dump() << '\n';
    for (double v : a.centroids) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        detail::write_u64(os, bits);
    }
}

inline AtlasModel read_atlas(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("malformed atlas: missing header");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed atlas header: ") + e.what());
    }
    if (h.value("format", "") != "phenoatlas-atlas") throw FormatError("malformed atlas: wrong format tag");
    AtlasModel a;
    try {
        a.clusters = h.at("clusters").get<std::size_t>();
        a.dim = h.at("dim").get<std::size_t>();
        a.provenance = provenance_from_json(h.at("provenance"));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed atlas header: ") + e.what());
    }
    a.centroids.resize(a.clusters * a.dim);
    for (auto& v : a.centroids) {
        const auto bits = detail::read_le<std::uint64_t>(in, "centroids");
        std::memcpy(&v, &bits, sizeof v);
    }
    return a;
}

inline void save_atlas(const std::string& path, const AtlasModel& a) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    write_atlas(os, a);
}

inline AtlasModel load_atlas(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return read_atlas(in);
}

inline void write_assignment_csv(std::ostream& os, std::span<const std::string> tile_ids,
                                 std::span<const std::uint32_t> mapping) {
    os << "tile_id,hpc_id\n";
    for (std::size_t i = 0; i < tile_ids.size(); ++i) os << tile_ids[i] << ',' << mapping[i] << '\n';
}

}  // namespace phenoatlas

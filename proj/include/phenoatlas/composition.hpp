// composition.hpp
//
// Cluster counts -> proportions -> zero replacement -> centred log-ratio.
#pragma once

#include <phenoatlas/atlas.hpp>
#include <phenoatlas/common.hpp>

#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace phenoatlas {

/// Proportions n_j / sum_u n_u for one count row.
inline std::vector<double> frequencies(std::span<const std::int64_t> counts) {
    std::int64_t total = 0;
    for (auto v : counts) {
        if (v < 0) throw ValidationError("negative count");
        total += v;
    }
    if (total == 0) throw ValidationError("entity with zero tiles");
    std::vector<double> out(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j) out[j] = static_cast<double>(counts[j]) / static_cast<double>(total);
    return out;
}

/// Zeros become delta; non-zero parts are scaled by (1 - z*delta), z = number of zeros.
inline std::vector<double> multiplicative_replacement(std::span<const double> freq, double delta) {
    std::size_t zeros = 0;
    double min_positive = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double a : freq) {
        if (a < 0.0 || !std::isfinite(a)) throw ValidationError("composition has a negative or non-finite part");
        sum += a;
        if (a == 0.0) ++zeros;
        else min_positive = std::min(min_positive, a);
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("composition does not sum to 1");
    std::vector<double> out(freq.begin(), freq.end());
    if (zeros == 0) return out;
    if (!(delta > 0.0) || !(delta < min_positive) || !(static_cast<double>(zeros) * delta < 1.0))
        throw ValidationError("replacement delta " + std::to_string(delta) + " is invalid for this row");
    const double scale = 1.0 - static_cast<double>(zeros) * delta;
    for (auto& a : out) a = a == 0.0 ? delta : a * scale;
    return out;
}

/// log(a_j / g(a)) with the geometric mean taken in the log domain.
inline std::vector<double> clr(std::span<const double> a) {
    if (a.empty()) throw ValidationError("clr of an empty row");
    std::vector<double> logs(a.size());
    // Neumaier summation: with thousands of parts the naive sum of logs drifts past 1e-9
    double sum = 0.0, carry = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (!(a[j] > 0.0)) throw ValidationError("clr requires strictly positive parts");
        logs[j] = std::log(a[j]);
        const double t = sum + logs[j];
        carry += std::abs(sum) >= std::abs(logs[j]) ? (sum - t) + logs[j] : (logs[j] - t) + sum;
        sum = t;
    }
    const double mean_log = (sum + carry) / static_cast<double>(a.size());
    for (auto& l : logs) l -= mean_log;
    return logs;
}

/// How delta is chosen for each entity's row.
struct DeltaPolicy {
    /// Fixed delta; when unset, half a pseudo-count: 0.5 / max(total tiles, clusters).
    std::optional<double> fixed;

    double for_row(std::int64_t total_tiles, std::size_t clusters) const {
        if (fixed) return *fixed;
        return 0.5 / static_cast<double>(std::max<std::int64_t>(total_tiles, static_cast<std::int64_t>(clusters)));
    }
};

struct CompositionMatrix {
    std::vector<std::string> entity_ids;
    Matrix raw_freq;
    Matrix replaced;
    Matrix clr_x;
};

inline CompositionMatrix compose(const CountsTable& counts, const DeltaPolicy& policy = {}) {
    const std::size_t n = counts.entity_ids.size(), c = counts.clusters;
    CompositionMatrix out{counts.entity_ids, Matrix(n, c), Matrix(n, c), Matrix(n, c)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto f = frequencies(counts.row(i));
        std::vector<double> a;
        try {
            a = multiplicative_replacement(f, policy.for_row(counts.row_total(i), c));
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(e.what()) + " (entity '" + counts.entity_ids[i] + "')");
        }
        const auto x = clr(a);
        std::copy(f.begin(), f.end(), out.raw_freq.row(i));
        std::copy(a.begin(), a.end(), out.replaced.row(i));
        std::copy(x.begin(), x.end(), out.clr_x.row(i));
    }
    return out;
}

inline void write_feature_csv(std::ostream& os, std::span<const std::string> ids, const Matrix& m) {
    os << "entity_id";
    for (std::size_t j = 0; j < m.cols; ++j) os << ",hpc_" << j;
    os << '\n';
    for (std::size_t i = 0; i < m.rows; ++i) {
        os << ids[i];
        for (std::size_t j = 0; j < m.cols; ++j) os << ',' << detail::number_repr(m(i, j));
        os << '\n';
    }
}

inline void save_feature_csv(const std::string& path, std::span<const std::string> ids, const Matrix& m) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    write_feature_csv(os, ids, m);
}

struct FeatureTable {
    std::vector<std::string> ids;
    Matrix values;
};

inline FeatureTable read_feature_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("malformed header: empty feature file");
    const auto header = detail::split_csv(detail::trim(line));
    if (header.size() < 2 || detail::trim(header[0]) != "entity_id")
        throw FormatError("malformed header: expected entity_id,hpc_0,...");
    for (std::size_t j = 1; j < header.size(); ++j)
        if (detail::trim(header[j]) != "hpc_" + std::to_string(j - 1))
            throw FormatError("malformed header: expected hpc_" + std::to_string(j - 1));
    FeatureTable t;
    t.values.cols = header.size() - 1;
    std::size_t rowno = 0;
    while (std::getline(in, line)) {
        const auto tr = detail::trim(line);
        if (tr.empty()) continue;
        ++rowno;
        const auto f = detail::split_csv(tr);
        if (f.size() != header.size()) throw FormatError("inconsistent row width at row " + std::to_string(rowno));
        t.ids.emplace_back(detail::trim(f[0]));
        for (std::size_t j = 1; j < f.size(); ++j) {
            auto v = detail::parse_number<double>(f[j]);
            if (!v || !std::isfinite(*v)) throw FormatError("bad value at row " + std::to_string(rowno));
            t.values.data.push_back(*v);
        }
        ++t.values.rows;
    }
    return t;
}

inline FeatureTable load_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_feature_csv(in);
}

}  // namespace phenoatlas

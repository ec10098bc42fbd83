// ssl_loss.hpp
//
// Barlow Twins redundancy-reduction objective on a pair of embedding batches.
#pragma once

#include <phenoatlas/cohort_io.hpp>
#include <phenoatlas/common.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace phenoatlas::ssl {

/// Embeddings of two views of the same N inputs, each N x D.
struct BatchPair {
    Matrix z;
    Matrix z_prime;
};

namespace detail {

// Mean-centred columns scaled to unit population variance.
inline Matrix standardize(const Matrix& z, const char* which) {
    const std::size_t n = z.rows, d = z.cols;
    Matrix out(n, d);
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t b = 0; b < n; ++b) mean += z(b, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t b = 0; b < n; ++b) var += (z(b, j) - mean) * (z(b, j) - mean);
        var /= static_cast<double>(n);
        if (!(var > 0.0))
            throw ValidationError(std::string("zero-variance column ") + std::to_string(j) + " in " + which);
        const double inv = 1.0 / std::sqrt(var);
        for (std::size_t b = 0; b < n; ++b) out(b, j) = (z(b, j) - mean) * inv;
    }
    return out;
}

}  // namespace detail

/// C_ij = (1/N) sum_b zbar_bi zbar'_bj over standardized columns.
inline Matrix cross_correlation(const BatchPair& pair) {
    const auto& z = pair.z;
    const auto& zp = pair.z_prime;
    if (z.rows != zp.rows || z.cols != zp.cols) throw ValidationError("views have different shapes");
    if (z.rows < 2) throw ValidationError("batch size must be at least 2");
    if (z.cols == 0) throw ValidationError("empty embedding dimension");
    const auto a = detail::standardize(z, "Z");
    const auto b = detail::standardize(zp, "Z'");
    const std::size_t n = z.rows, d = z.cols;
    Matrix c(d, d);
    for (std::size_t r = 0; r < n; ++r) {
        const double* ar = a.row(r);
        const double* br = b.row(r);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) c(i, j) += ar[i] * br[j];
    }
    for (auto& v : c.data) v /= static_cast<double>(n);
    return c;
}

inline double barlow_loss(const Matrix& c, double lambda) {
    if (c.rows != c.cols) throw ValidationError("cross-correlation matrix must be square");
    double on = 0.0, off = 0.0;
    for (std::size_t i = 0; i < c.rows; ++i)
        for (std::size_t j = 0; j < c.cols; ++j) {
            if (i == j) on += (1.0 - c(i, j)) * (1.0 - c(i, j));
            else off += c(i, j) * c(i, j);
        }
    return on + lambda * off;
}

/// dL/dC: -2(1 - C_ii) on the diagonal, 2 lambda C_ij off it.
inline Matrix barlow_gradient(const Matrix& c, double lambda) {
    if (c.rows != c.cols) throw ValidationError("cross-correlation matrix must be square");
    Matrix g(c.rows, c.cols);
    for (std::size_t i = 0; i < c.rows; ++i)
        for (std::size_t j = 0; j < c.cols; ++j)
            g(i, j) = i == j ? -2.0 * (1.0 - c(i, j)) : 2.0 * lambda * c(i, j);
    return g;
}

struct CorrelationSummary {
    double mean_diagonal = 0.0;
    double min_diagonal = 0.0;
    double max_abs_off_diagonal = 0.0;
    double mean_abs_off_diagonal = 0.0;
};

inline CorrelationSummary summarize(const Matrix& c) {
    CorrelationSummary s;
    s.min_diagonal = c.rows ? c(0, 0) : 0.0;
    std::size_t off = 0;
    for (std::size_t i = 0; i < c.rows; ++i)
        for (std::size_t j = 0; j < c.cols; ++j) {
            if (i == j) {
                s.mean_diagonal += c(i, j);
                s.min_diagonal = std::min(s.min_diagonal, c(i, j));
            } else {
                s.max_abs_off_diagonal = std::max(s.max_abs_off_diagonal, std::abs(c(i, j)));
                s.mean_abs_off_diagonal += std::abs(c(i, j));
                ++off;
            }
        }
    if (c.rows) s.mean_diagonal /= static_cast<double>(c.rows);
    if (off) s.mean_abs_off_diagonal /= static_cast<double>(off);
    return s;
}

/// Reads a headerless or headed numeric CSV as a matrix. A first line with any
/// non-numeric field is treated as a header.
inline Matrix read_matrix_csv(std::istream& in) {
    Matrix m;
    std::string line;
    std::size_t lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        const auto tr = phenoatlas::detail::trim(line);
        if (tr.empty()) continue;
        const auto fields = phenoatlas::detail::split_csv(tr);
        std::vector<double> row;
        bool numeric = true;
        for (const auto& f : fields) {
            auto v = phenoatlas::detail::parse_number<double>(f);
            if (!v) {
                numeric = false;
                break;
            }
            row.push_back(*v);
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw FormatError("non-numeric value at line " + std::to_string(lineno));
        }
        first = false;
        if (m.rows == 0) m.cols = row.size();
        else if (row.size() != m.cols) throw FormatError("inconsistent row width at line " + std::to_string(lineno));
        for (double v : row)
            if (!std::isfinite(v)) throw FormatError("non-finite value at line " + std::to_string(lineno));
        m.data.insert(m.data.end(), row.begin(), row.end());
        ++m.rows;
    }
    return m;
}

inline Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_matrix_csv(in);
}

}  // namespace phenoatlas::ssl

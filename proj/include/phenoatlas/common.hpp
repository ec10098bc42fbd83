// common.hpp
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace phenoatlas {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (header, row width, encoding).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Input is well-formed but violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A model or artifact was used outside the fold it was fitted for.
class ProvenanceError : public Error {
public:
    using Error::Error;
};

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-task seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for sub-task `tag` of a run seeded with `base`. Independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    return mix_seed(mix_seed(base) ^ mix_seed(tag + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    // FNV-1a over the tag bytes
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return derive_seed(base, h);
}

/// Dense row-major matrix of doubles. Small value type used for feature tables.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    /// Rows `idx` in the given order.
    Matrix select_rows(const std::vector<std::size_t>& idx) const {
        Matrix out(idx.size(), cols);
        for (std::size_t k = 0; k < idx.size(); ++k)
            std::copy(row(idx[k]), row(idx[k]) + cols, out.row(k));
        return out;
    }
};

}  // namespace phenoatlas

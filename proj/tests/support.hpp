// Small fixtures shared by the unit suites.
#pragma once

#include <phenoatlas/phenoatlas.hpp>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace support {

inline phenoatlas::EmbeddingSet points(const std::vector<std::vector<double>>& pts,
                                       const std::vector<std::string>& patients = {}) {
    phenoatlas::EmbeddingSet e;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::vector<float> v(pts[i].begin(), pts[i].end());
        const std::string patient = patients.empty() ? "P" + std::to_string(i) : patients[i];
        e.push_back("T" + std::to_string(i), patient + "-S1", patient, v);
    }
    return e;
}

inline std::vector<std::vector<double>> random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> pts(n, std::vector<double>(d));
    for (auto& p : pts)
        for (auto& v : p) v = static_cast<float>(g(rng));  // representable as float
    return pts;
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("phenoatlas_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline phenoatlas::synth::SynthSpec blob_spec(std::size_t patients, std::size_t tiles, std::size_t clusters,
                                              std::size_t dim, std::uint64_t seed) {
    phenoatlas::synth::SynthSpec s;
    s.n_patients = patients;
    s.slides_per_patient = 1;
    s.tiles_per_slide = tiles;
    s.c_true = clusters;
    s.dim = dim;
    s.blob_sigma = 0.05;
    s.blob_separation = 1.0;
    s.seed = seed;
    return s;
}

}  // namespace support

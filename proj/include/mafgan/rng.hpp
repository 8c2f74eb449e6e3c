#pragma once

#include "mafgan/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace mafgan {

// Named substream of a run seed. Streams with different names are
// independent, so perturbing one component (say the mixup draws) leaves the
// others bit-identical.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream) {
        std::uint64_t h = 1469598103934665603ULL;
        for (char c : stream) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
        engine_.seed(seq);
    }

    double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

    ad::Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
        ad::Matrix m(rows, cols);
        std::normal_distribution<double> dist(0.0, stddev);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = dist(engine_);
        }
        return m;
    }

    ad::Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo = 0.0, double hi = 1.0) {
        ad::Matrix m(rows, cols);
        std::uniform_real_distribution<double> dist(lo, hi);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = dist(engine_);
        }
        return m;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace mafgan

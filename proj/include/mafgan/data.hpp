#pragma once

#include "mafgan/autodiff.hpp"
#include "mafgan/rng.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mafgan {

using ad::Matrix;

enum class SyntheticKind { gaussian_grid, circles };

[[nodiscard]] std::string_view to_string(SyntheticKind kind);
[[nodiscard]] SyntheticKind parse_synthetic_kind(std::string_view name);

// gaussian-grid: 9 equally weighted isotropic Gaussians centred on
// {-spacing, 0, spacing}^2. circles: a ring chosen uniformly, a uniform angle,
// and radial noise.
struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::gaussian_grid;
    std::size_t count = 50000;
    double spacing = 2.0;
    double mode_std = 0.05;
    std::vector<double> radii{0.5, 1.0, 1.5};
    double ring_std = 0.02;

    [[nodiscard]] std::vector<std::string> violations() const;
};

using Point2 = std::array<double, 2>;

[[nodiscard]] std::vector<Point2> grid_centers(const SyntheticSpec& spec);

Matrix sample_synthetic(const SyntheticSpec& spec, Rng& rng, std::size_t n);
Matrix sample_synthetic(const SyntheticSpec& spec, std::uint64_t seed, std::size_t n);

struct ModeCoverage {
    std::size_t covered = 0;
    std::vector<std::size_t> counts;  // points assigned to each centre
    std::size_t unassigned = 0;
};

// Each point goes to its nearest centre if within radius_thr. A mode is
// covered when it receives at least min_frac of all points.
ModeCoverage mode_coverage(const Matrix& points, const std::vector<Point2>& centers, double radius_thr,
                           double min_frac = 0.01);

}  // namespace mafgan

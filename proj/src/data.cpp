#include "mafgan/data.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace mafgan {

std::string_view to_string(SyntheticKind kind) {
    return kind == SyntheticKind::gaussian_grid ? "gaussian-grid" : "circles";
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
    if (name == "gaussian-grid") {
        return SyntheticKind::gaussian_grid;
    }
    if (name == "circles") {
        return SyntheticKind::circles;
    }
    throw ad::ConfigurationError("unknown data kind '" + std::string(name) + "' (expected gaussian-grid|circles)");
}

std::vector<std::string> SyntheticSpec::violations() const {
    std::vector<std::string> out;
    if (count == 0) {
        out.emplace_back("data.count must be > 0");
    }
    if (kind == SyntheticKind::gaussian_grid) {
        if (!(mode_std > 0.0)) {
            out.emplace_back("data.mode_std must be > 0");
        }
        if (!(spacing > 0.0)) {
            out.emplace_back("data.spacing must be > 0");
        }
    } else {
        if (!(ring_std > 0.0)) {
            out.emplace_back("data.ring_std must be > 0");
        }
        if (radii.empty()) {
            out.emplace_back("data.radii must list at least one radius");
        }
        std::set<double> distinct(radii.begin(), radii.end());
        if (distinct.size() != radii.size()) {
            out.emplace_back("data.radii must be distinct");
        }
        for (double r : radii) {
            if (!(r > 0.0)) {
                out.emplace_back("data.radii must be positive");
                break;
            }
        }
    }
    return out;
}

std::vector<Point2> grid_centers(const SyntheticSpec& spec) {
    std::vector<Point2> out;
    if (spec.kind != SyntheticKind::gaussian_grid) {
        return out;
    }
    for (int i = -1; i <= 1; ++i) {
        for (int j = -1; j <= 1; ++j) {
            out.push_back({i * spec.spacing, j * spec.spacing});
        }
    }
    return out;
}

Matrix sample_synthetic(const SyntheticSpec& spec, Rng& rng, std::size_t n) {
    Matrix out(n, 2);
    if (spec.kind == SyntheticKind::gaussian_grid) {
        const auto centers = grid_centers(spec);
        for (std::size_t i = 0; i < n; ++i) {
            const Point2& c = centers[rng.index(centers.size())];
            const double dx = rng.normal();
            const double dy = rng.normal();
            out(i, 0) = c[0] + spec.mode_std * dx;
            out(i, 1) = c[1] + spec.mode_std * dy;
        }
        return out;
    }
    if (spec.radii.empty()) {
        throw ad::ConfigurationError("circles: no radii");
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double r0 = spec.radii[rng.index(spec.radii.size())];
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double noise = rng.normal();
        const double r = r0 + spec.ring_std * noise;
        out(i, 0) = r * std::cos(angle);
        out(i, 1) = r * std::sin(angle);
    }
    return out;
}

Matrix sample_synthetic(const SyntheticSpec& spec, std::uint64_t seed, std::size_t n) {
    Rng rng(seed, "data");
    return sample_synthetic(spec, rng, n);
}

ModeCoverage mode_coverage(const Matrix& points, const std::vector<Point2>& centers, double radius_thr,
                           double min_frac) {
    ModeCoverage cov;
    cov.counts.assign(centers.size(), 0);
    const double thr2 = radius_thr * radius_thr;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < centers.size(); ++k) {
            const double dx = points(i, 0) - centers[k][0];
            const double dy = points(i, 1) - centers[k][1];
            const double d2 = dx * dx + dy * dy;
            if (d2 < best) {
                best = d2;
                best_k = k;
            }
        }
        if (!centers.empty() && best <= thr2) {
            ++cov.counts[best_k];
        } else {
            ++cov.unassigned;
        }
    }
    const double total = static_cast<double>(points.rows());
    if (total == 0.0) {
        return cov;
    }
    for (std::size_t c : cov.counts) {
        if (c > 0 && static_cast<double>(c) >= min_frac * total) {
            ++cov.covered;
        }
    }
    return cov;
}

}  // namespace mafgan

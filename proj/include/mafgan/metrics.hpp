#pragma once

#include "mafgan/autodiff.hpp"
#include "mafgan/gradcheck.hpp"

#include <Eigen/Core>

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace mafgan {

using ad::Matrix;
using ad::Tensor;

struct Gaussian2 {
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;  // unbiased (n - 1) estimate
};

Gaussian2 fit_gaussian_2d(const Matrix& points);

// Projects a symmetric 2x2 matrix onto the PSD cone (eigenvalues floored at 0).
Eigen::Matrix2d psd_floor(const Eigen::Matrix2d& m);

// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}) using the closed form
// tr((S_a S_b)^{1/2}) = sqrt(tr(S_a S_b) + 2 sqrt(det S_a det S_b)).
double frechet_distance(const Gaussian2& a, const Gaussian2& b);

// Fits a Gaussian to each cloud; both need at least 3 rows.
double frechet_distance_2d(const Matrix& a, const Matrix& b);

struct Bounds {
    double x_min = -3.0;
    double x_max = 3.0;
    double y_min = -3.0;
    double y_max = 3.0;
};

struct ConfidenceMap {
    Bounds bounds;
    std::size_t resolution = 0;
    Matrix values;  // resolution x resolution, row = y index, column = x index

    [[nodiscard]] double x_at(std::size_t i) const;
    [[nodiscard]] double y_at(std::size_t j) const;
    // Columns x,y,value; one row per grid point.
    void write_csv(std::ostream& os) const;
};

// Evaluates `realness` ([k x 2] -> [k x 1]) on a regular grid over `bounds`.
ConfidenceMap confidence_map(const std::function<Tensor(const Tensor&)>& realness, const Bounds& bounds,
                             std::size_t resolution);

struct LayerHistogram {
    std::string layer;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;

    [[nodiscard]] std::size_t total() const;
    [[nodiscard]] std::size_t occupied_bins() const;
};

// Per-layer histogram over `bins` uniform bins spanning that layer's observed
// range. A constant layer puts everything in the first bin.
std::vector<LayerHistogram> weight_histogram(const std::vector<ad::NamedTensor>& params, std::size_t bins);

// Columns layer,bin_lo,bin_hi,count.
void write_histogram_csv(std::ostream& os, const std::vector<LayerHistogram>& hist);

}  // namespace mafgan

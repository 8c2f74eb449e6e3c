#include "mafgan/metrics.hpp"

#include "mafgan/io.hpp"
#include "mafgan/networks.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace mafgan {

Gaussian2 fit_gaussian_2d(const Matrix& points) {
    if (points.cols() != 2) {
        throw ad::DimensionError("fit_gaussian_2d: expected [n x 2] points");
    }
    if (points.rows() < 2) {
        throw ad::ContractError("fit_gaussian_2d: need at least 2 points");
    }
    Gaussian2 g;
    g.mean = points.colwise().mean().transpose();
    const Eigen::MatrixX2d centred = points.rowwise() - g.mean.transpose();
    g.cov = (centred.transpose() * centred) / static_cast<double>(points.rows() - 1);
    return g;
}

Eigen::Matrix2d psd_floor(const Eigen::Matrix2d& m) {
    const double a = m(0, 0);
    const double b = 0.5 * (m(0, 1) + m(1, 0));
    const double c = m(1, 1);
    const double half_trace = 0.5 * (a + c);
    const double radius = std::hypot(0.5 * (a - c), b);
    const double l1 = half_trace + radius;
    const double l2 = half_trace - radius;
    Eigen::Matrix2d sym;
    sym << a, b, b, c;
    if (l2 >= 0.0) {
        return sym;
    }
    if (l1 <= 0.0) {
        return Eigen::Matrix2d::Zero();
    }
    // Keep only the top eigenpair.
    Eigen::Vector2d v;
    if (radius == 0.0) {
        v << 1.0, 0.0;
    } else if (std::abs(b) > 0.0) {
        v << b, l1 - a;
    } else {
        v = a >= c ? Eigen::Vector2d(1.0, 0.0) : Eigen::Vector2d(0.0, 1.0);
    }
    v.normalize();
    return l1 * v * v.transpose();
}

double frechet_distance(const Gaussian2& a, const Gaussian2& b) {
    const Eigen::Matrix2d sa = psd_floor(a.cov);
    const Eigen::Matrix2d sb = psd_floor(b.cov);
    const double tr_prod = std::max(0.0, (sa * sb).trace());
    const double det_prod = std::max(0.0, sa.determinant()) * std::max(0.0, sb.determinant());
    const double tr_sqrt = std::sqrt(tr_prod + 2.0 * std::sqrt(det_prod));
    const double value = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, value);
}

double frechet_distance_2d(const Matrix& a, const Matrix& b) {
    if (a.rows() < 3 || b.rows() < 3) {
        throw ad::ContractError("frechet_distance_2d: each cloud needs at least 3 points");
    }
    return frechet_distance(fit_gaussian_2d(a), fit_gaussian_2d(b));
}

// ---- confidence maps ----------------------------------------------------

double ConfidenceMap::x_at(std::size_t i) const {
    if (resolution <= 1) {
        return 0.5 * (bounds.x_min + bounds.x_max);
    }
    return bounds.x_min + (bounds.x_max - bounds.x_min) * static_cast<double>(i) / static_cast<double>(resolution - 1);
}

double ConfidenceMap::y_at(std::size_t j) const {
    if (resolution <= 1) {
        return 0.5 * (bounds.y_min + bounds.y_max);
    }
    return bounds.y_min + (bounds.y_max - bounds.y_min) * static_cast<double>(j) / static_cast<double>(resolution - 1);
}

void ConfidenceMap::write_csv(std::ostream& os) const {
    os << "x,y,value\n";
    for (std::size_t j = 0; j < resolution; ++j) {
        for (std::size_t i = 0; i < resolution; ++i) {
            os << format_double(x_at(i)) << ',' << format_double(y_at(j)) << ','
               << format_double(values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))) << '\n';
        }
    }
}

ConfidenceMap confidence_map(const std::function<Tensor(const Tensor&)>& realness, const Bounds& bounds,
                             std::size_t resolution) {
    if (resolution == 0) {
        throw ad::ContractError("confidence_map: resolution must be positive");
    }
    ConfidenceMap map;
    map.bounds = bounds;
    map.resolution = resolution;
    map.values = Matrix(resolution, resolution);

    ad::NoGradGuard no_grad;
    const std::size_t total = resolution * resolution;
    constexpr std::size_t kChunk = 4096;
    for (std::size_t start = 0; start < total; start += kChunk) {
        const std::size_t n = std::min(kChunk, total - start);
        Matrix pts(n, 2);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t flat = start + k;
            pts(static_cast<Eigen::Index>(k), 0) = map.x_at(flat % resolution);
            pts(static_cast<Eigen::Index>(k), 1) = map.y_at(flat / resolution);
        }
        const Tensor r = realness(Tensor::constant(std::move(pts)));
        if (r.rows() != n || r.cols() != 1) {
            throw ad::DimensionError("confidence_map: realness must return [k x 1], got " + r.shape_string());
        }
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t flat = start + k;
            map.values(static_cast<Eigen::Index>(flat / resolution), static_cast<Eigen::Index>(flat % resolution)) =
                r.value()(static_cast<Eigen::Index>(k), 0);
        }
    }
    return map;
}

// ---- histograms ---------------------------------------------------------

std::size_t LayerHistogram::total() const {
    std::size_t n = 0;
    for (auto c : counts) {
        n += c;
    }
    return n;
}

std::size_t LayerHistogram::occupied_bins() const {
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
}

std::vector<LayerHistogram> weight_histogram(const std::vector<ad::NamedTensor>& params, std::size_t bins) {
    if (bins == 0) {
        throw ad::ContractError("weight_histogram: bins must be positive");
    }
    const nn::FlatParams flat = nn::flatten_params(params);
    std::vector<LayerHistogram> out;
    for (const auto& layer : flat.layers()) {
        const auto values = flat.layer_values(layer);
        LayerHistogram h;
        h.layer = layer;
        h.counts.assign(bins, 0);
        if (values.empty()) {
            out.push_back(std::move(h));
            continue;
        }
        const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
        h.lo = *lo;
        h.hi = *hi;
        const double width = (h.hi - h.lo) / static_cast<double>(bins);
        for (double v : values) {
            std::size_t idx = 0;
            if (width > 0.0) {
                idx = std::min(bins - 1, static_cast<std::size_t>((v - h.lo) / width));
            }
            ++h.counts[idx];
        }
        out.push_back(std::move(h));
    }
    return out;
}

void write_histogram_csv(std::ostream& os, const std::vector<LayerHistogram>& hist) {
    os << "layer,bin_lo,bin_hi,count\n";
    for (const auto& h : hist) {
        const std::size_t bins = h.counts.size();
        const double width = bins == 0 ? 0.0 : (h.hi - h.lo) / static_cast<double>(bins);
        for (std::size_t b = 0; b < bins; ++b) {
            const double lo = h.lo + width * static_cast<double>(b);
            const double hi = b + 1 == bins ? h.hi : h.lo + width * static_cast<double>(b + 1);
            os << h.layer << ',' << format_double(lo) << ',' << format_double(hi) << ',' << h.counts[b] << '\n';
        }
    }
}

}  // namespace mafgan

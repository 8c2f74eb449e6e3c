#include "mafgan/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <cmath>

namespace mafgan::ad {

double FiniteDiffReport::max_rel_error() const {
    double worst = 0.0;
    for (const auto& p : params) {
        worst = std::max(worst, p.max_rel_error);
    }
    return worst;
}

std::size_t FiniteDiffReport::checked() const {
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.checked;
    }
    return n;
}

std::size_t FiniteDiffReport::excluded() const {
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.excluded;
    }
    return n;
}

double relative_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

namespace {

struct Evaluation {
    double value;
    std::uint64_t pattern;
};

Evaluation evaluate(const std::function<Tensor()>& fn) {
    KinkProbe probe;
    const Tensor out = fn();
    const double v = out.item();
    if (!std::isfinite(v)) {
        throw EvaluationError("finite_diff_check: function returned a non-finite value");
    }
    return {v, probe.fingerprint()};
}

// NaN when either side lands on a different kink pattern than the centre.
double central_difference(const std::function<Tensor()>& fn, double& slot, double saved, double step,
                          std::uint64_t pattern) {
    slot = saved + step;
    const Evaluation plus = evaluate(fn);
    slot = saved - step;
    const Evaluation minus = evaluate(fn);
    slot = saved;
    if (plus.pattern != pattern || minus.pattern != pattern) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return (plus.value - minus.value) / (2.0 * step);
}

struct Extrapolated {
    double value;
    double error;
};

std::optional<Extrapolated> ridders(const std::function<Tensor()>& fn, double& slot, double saved, double h,
                                    std::uint64_t pattern) {
    constexpr int kTable = 20;
    constexpr double kShrink = 1.4;
    constexpr double kShrink2 = kShrink * kShrink;
    constexpr double kSafe = 2.0;

    double step = h;
    double first = std::numeric_limits<double>::quiet_NaN();
    int used = 0;
    for (; used < kTable; ++used, step /= kShrink) {
        first = central_difference(fn, slot, saved, step, pattern);
        if (!std::isnan(first)) {
            break;
        }
    }
    if (std::isnan(first)) {
        return std::nullopt;
    }

    std::array<std::array<double, kTable>, kTable> a{};
    a[0][0] = first;
    double best = first;
    double err = std::numeric_limits<double>::max();
    for (int i = 1; i + used < kTable; ++i) {
        step /= kShrink;
        a[0][i] = central_difference(fn, slot, saved, step, pattern);
        if (std::isnan(a[0][i])) {
            return std::nullopt;
        }
        double fac = kShrink2;
        for (int j = 1; j <= i; ++j) {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= kShrink2;
            const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
            if (e <= err) {
                err = e;
                best = a[j][i];
            }
        }
        if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) {
            break;
        }
    }
    return Extrapolated{best, err};
}

// Restarts from a ten times smaller step while the tableau's error estimate
// plus roundoff is not well inside the tolerance, keeping the best-resolved
// result. A kink inside the first step excludes the element.
std::optional<double> adaptive_ridders(const std::function<Tensor()>& fn, double& slot, double saved, double h,
                                       double tol, const Evaluation& centre) {
    const double roundoff = std::numeric_limits<double>::epsilon() * std::max(std::abs(centre.value), 1.0);
    constexpr int kRestarts = 4;
    std::optional<Extrapolated> kept;
    double kept_ratio = std::numeric_limits<double>::infinity();
    for (int r = 0; r < kRestarts; ++r, h /= 10.0) {
        const auto est = ridders(fn, slot, saved, h, centre.pattern);
        if (!est) {
            if (r == 0) {
                return std::nullopt;
            }
            continue;
        }
        const double ratio = (est->error + roundoff / h) / std::max(std::abs(est->value), 1e-8);
        if (ratio < kept_ratio) {
            kept = est;
            kept_ratio = ratio;
        }
        if (ratio <= 0.1 * tol) {
            break;
        }
    }
    if (!kept) {
        return std::nullopt;
    }
    return kept->value;
}

}  // namespace

FiniteDiffReport finite_diff_check(const std::function<Tensor()>& fn, std::vector<NamedTensor> params, double h,
                                   double tol, DiffScheme scheme) {
    FiniteDiffReport report;
    report.tolerance = tol;

    for (auto& p : params) {
        p.tensor.zero_grad();
    }
    const Tensor out = fn();
    if (!std::isfinite(out.item())) {
        throw EvaluationError("finite_diff_check: function returned a non-finite value");
    }
    backward(out);
    const Evaluation centre = evaluate(fn);

    for (auto& p : params) {
        ParamCheck check;
        check.name = p.name;
        const Matrix analytic =
            p.tensor.has_grad() ? p.tensor.grad().value() : Matrix::Zero(p.tensor.value().rows(), p.tensor.value().cols());
        Matrix& values = p.tensor.mutable_value();
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            double& slot = values.data()[i];
            const double saved = slot;
            std::optional<double> numeric;
            if (scheme == DiffScheme::central) {
                const double d = central_difference(fn, slot, saved, h, centre.pattern);
                if (!std::isnan(d)) {
                    numeric = d;
                }
            } else {
                numeric = adaptive_ridders(fn, slot, saved, h, tol, centre);
            }
            slot = saved;
            if (!numeric) {
                ++check.excluded;
                continue;
            }
            const double numeric_value = *numeric;
            check.max_rel_error = std::max(check.max_rel_error, relative_error(analytic.data()[i], numeric_value));
            ++check.checked;
        }
        report.params.push_back(std::move(check));
    }
    return report;
}

}  // namespace mafgan::ad

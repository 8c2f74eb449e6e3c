#pragma once

#include "mafgan/autodiff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mafgan::ad {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct ParamCheck {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;  // elements whose central difference straddles a kink
};

struct FiniteDiffReport {
    std::vector<ParamCheck> params;
    double tolerance = 0.0;

    [[nodiscard]] double max_rel_error() const;
    [[nodiscard]] std::size_t checked() const;
    [[nodiscard]] std::size_t excluded() const;
    [[nodiscard]] bool passed() const { return max_rel_error() < tolerance; }
};

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

enum class DiffScheme {
    central,  // (f(x+h) - f(x-h)) / 2h
    // Ridders' extrapolation over central differences at h, h/1.4, h/1.4^2, ...
    // keeping the estimate with the smallest error. Steps that straddle a kink
    // are dropped from the front of the sequence.
    ridders,
};

// Compares backward() against central differences for every element of every
// parameter. `fn` must rebuild its graph from the current parameter values on
// each call and return a scalar. Elements where the selection pattern of a
// non-smooth op differs between any probed point and x are reported as
// excluded.
FiniteDiffReport finite_diff_check(const std::function<Tensor()>& fn, std::vector<NamedTensor> params, double h,
                                   double tol, DiffScheme scheme = DiffScheme::central);

}  // namespace mafgan::ad

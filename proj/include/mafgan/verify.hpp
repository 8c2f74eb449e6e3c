#pragma once

#include "mafgan/metrics.hpp"
#include "mafgan/theorems.hpp"

#include <cstdint>
#include <ostream>
#include <vector>

namespace mafgan {

struct VerifyOptions {
    std::uint64_t seed = 7;
    std::size_t fd_networks = 100;  // random networks per primitive set
    bool mutate_tc_order = false;
};

// Gradient checks for each primitive set: max relative error between
// backward() and Richardson-extrapolated differences over `networks` random
// draws.
std::vector<CheckResult> finite_difference_suite(std::uint64_t seed, std::size_t networks);

// Reference Frechet distance through symmetric eigendecompositions:
// tr((S_a S_b)^{1/2}) = tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}).
double frechet_distance_eig(const Gaussian2& a, const Gaussian2& b);

// Frechet distance against the eigendecomposition reference and the unit
// shift case, sampler mode proportions, and a rerun determinism check.
std::vector<CheckResult> metric_oracle_suite(std::uint64_t seed);

// Everything above plus theorem_suite.
std::vector<CheckResult> verify_all(const VerifyOptions& options);

// One line per check: PASS|FAIL name observed tolerance detail.
void print_checks(std::ostream& os, const std::vector<CheckResult>& checks);

}  // namespace mafgan

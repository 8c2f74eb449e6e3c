#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mafgan {

struct CheckResult {
    std::string name;
    double tolerance = 0.0;
    double observed = 0.0;
    bool passed = false;
    std::string detail;
};

struct TheoremOptions {
    std::uint64_t seed = 7;
    std::size_t affine_triples = 1000;
    std::size_t deep_seeds = 100;
    // Mixes embeddings in the wrong order; the affine zero checks must fail.
    bool swap_embedding_order = false;
};

// Numerical checks of the consistency residual's structural properties:
// affine critics reach exactly zero for every metric, the squared-error
// expansion of the residual, strictly positive residual for random deep
// critics, invariance of the zero set and the argmax under a positive loss
// scale, the eps = 0 endpoint, the penalty of unit-gradient linear critics,
// and absence of generator gradients from the residual.
std::vector<CheckResult> theorem_suite(const TheoremOptions& options = {});

}  // namespace mafgan

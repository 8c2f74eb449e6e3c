#pragma once

#include "mafgan/autodiff.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mafgan {

using ad::Matrix;
using ad::Tensor;

struct AdamConfig {
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Matrix m;
    Matrix v;
};

struct StepOutcome {
    bool applied = true;
    std::string diagnostic;  // set when the step was rejected
};

// One bias-corrected Adam update over parallel arrays. `t` is the 1-based
// step count after this update. Rejects the whole step, leaving params and
// state untouched, if any gradient is non-finite.
StepOutcome adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                      std::vector<AdamState>& state, std::int64_t t, double lr, const AdamConfig& cfg);

// Adam over a fixed set of leaf tensors, reading their accumulated grads.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);

    StepOutcome step(double lr);
    void zero_grad();

    [[nodiscard]] std::int64_t steps() const { return t_; }
    [[nodiscard]] const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<AdamState> state_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

}  // namespace mafgan

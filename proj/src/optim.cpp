#include "mafgan/optim.hpp"

#include <cmath>

namespace mafgan {

StepOutcome adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
                      std::vector<AdamState>& state, std::int64_t t, double lr, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.size()) {
        throw ad::DimensionError("adam_step: params, grads and state differ in count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols()) {
            throw ad::DimensionError("adam_step: gradient shape differs from parameter " + std::to_string(i));
        }
        if (!grads[i]->allFinite()) {
            return {false, "non-finite gradient in parameter " + std::to_string(i)};
        }
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        AdamState& s = state[i];
        const Matrix& g = *grads[i];
        if (s.m.size() == 0) {
            s.m = Matrix::Zero(g.rows(), g.cols());
            s.v = Matrix::Zero(g.rows(), g.cols());
        }
        s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * g;
        s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const auto m_hat = s.m.array() / c1;
        const auto v_hat = s.v.array() / c2;
        params[i]->array() -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    return {};
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), state_(params_.size()), cfg_(cfg) {}

StepOutcome Adam::step(double lr) {
    std::vector<Matrix*> values;
    std::vector<Matrix> zeros;
    std::vector<const Matrix*> grads;
    zeros.reserve(params_.size());
    for (auto& p : params_) {
        values.push_back(&p.mutable_value());
        if (p.has_grad()) {
            grads.push_back(&p.grad().value());
        } else {
            zeros.push_back(Matrix::Zero(p.value().rows(), p.value().cols()));
            grads.push_back(&zeros.back());
        }
    }
    StepOutcome out = adam_step(values, grads, state_, t_ + 1, lr, cfg_);
    if (out.applied) {
        ++t_;
    }
    return out;
}

void Adam::zero_grad() {
    for (auto& p : params_) {
        p.zero_grad();
    }
}

}  // namespace mafgan

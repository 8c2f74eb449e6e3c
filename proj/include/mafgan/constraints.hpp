#pragma once

#include "mafgan/autodiff.hpp"
#include "mafgan/networks.hpp"
#include "mafgan/rng.hpp"

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mafgan {

using ad::Tensor;

enum class ConstraintKind { none, clip, gp, tc };
enum class TcMetric { mse, l1, cosine };

[[nodiscard]] std::string_view to_string(ConstraintKind kind);
[[nodiscard]] std::string_view to_string(TcMetric metric);
[[nodiscard]] ConstraintKind parse_constraint_kind(std::string_view name);
[[nodiscard]] TcMetric parse_tc_metric(std::string_view name);

struct ConstraintSpec {
    ConstraintKind kind = ConstraintKind::tc;
    double clip = 0.01;
    double gp_weight = 10.0;
    double tc_weight = 1.0;
    TcMetric tc_metric = TcMetric::mse;
    double delta_std = 0.05;
    std::size_t probe_layer = 2;  // second-to-last fully-connected layer of D
    // Positive factor K on the adversarial objective (critic and generator).
    double k_scale = 1.0;

    [[nodiscard]] std::vector<std::string> violations() const;
    void validate() const;
};

using EmbedFn = std::function<Tensor(const Tensor&)>;

// Per-row mixing weights in [0, 1).
std::vector<double> sample_mix_coefficients(Rng& rng, std::size_t n);

// x_hat_i = eps_i * x_real_i + (1 - eps_i) * x_fake_i
Tensor mixup(const Tensor& x_real, const Tensor& x_fake, std::span<const double> eps);

// Row-wise distance, [b x 1]: mean squared difference, mean absolute
// difference, or 1 - cosine similarity.
Tensor tc_distance(const Tensor& a, const Tensor& b, TcMetric metric);

struct TcOptions {
    TcMetric metric = TcMetric::mse;
    // Mixes the embeddings with eps on the fake side. Wrong on purpose; only
    // the verify mutation check uses it.
    bool swap_embedding_order = false;
};

// mean_i [ d(embed(mixup(x_r, x_g, eps))_i, mixup(embed(x_r), embed(x_g), eps)_i) + delta_i ]
// Both inputs are detached, so no gradient reaches whatever produced them.
// `delta` is either empty (no perturbation) or one value per row.
Tensor topological_consistency(const EmbedFn& embed, const Tensor& x_real, const Tensor& x_fake,
                               std::span<const double> eps, std::span<const double> delta, TcOptions options = {});

// Same, reusing endpoint embeddings already computed from detached inputs.
Tensor topological_consistency(const EmbedFn& embed, const Tensor& x_real, const Tensor& x_fake,
                               const Tensor& v_real, const Tensor& v_fake, std::span<const double> eps,
                               std::span<const double> delta, TcOptions options = {});

// mean_i (|grad_x realness(x_hat_i)|_2 - 1)^2 at x_hat = mixup(x_r, x_g, eps).
// `realness` maps [b x n] inputs to [b x 1]. Differentiates through the input
// gradient, so every op inside `realness` must support double backward.
Tensor gradient_penalty(const EmbedFn& realness, const Tensor& x_real, const Tensor& x_fake,
                        std::span<const double> eps);

// Clamps every value of every tensor to [-c, c].
void weight_clip(const std::vector<Tensor>& params, double c);

struct ProbeStats {
    double mean = 0.0;
    double variance = 0.0;
};

// Topological-consistency residual (MSE, no perturbation) measured on the
// output of layer `layer`, over `trials` independent draws of eps. No graph
// is recorded.
ProbeStats continuity_probe(const nn::Discriminator& d, const Tensor& x_real, const Tensor& x_fake,
                            std::size_t layer, std::size_t trials, Rng& rng);

}  // namespace mafgan

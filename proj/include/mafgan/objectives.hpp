#pragma once

#include "mafgan/autodiff.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mafgan {

using ad::Tensor;

enum class ObjectiveKind { std_gan, wgan, maf_c, maf_d, maf_e };

[[nodiscard]] std::string_view to_string(ObjectiveKind kind);
[[nodiscard]] ObjectiveKind parse_objective_kind(std::string_view name);

// Raised when an embedding batch cannot be scored (e.g. a zero-norm row under
// the cosine objective). The trainer skips the step.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kNormEps = 1e-12;
inline constexpr double kLogClamp = 1e-12;
inline constexpr double kPositiveFloor = 1e-6;

struct ObjectiveSpec {
    ObjectiveKind kind = ObjectiveKind::maf_e;
    // Std-GAN generator: -E log s(V_fake) when true, E log(1 - s(V_fake)) otherwise.
    bool non_saturating = true;

    [[nodiscard]] bool requires_scalar_embedding() const {
        return kind == ObjectiveKind::std_gan || kind == ObjectiveKind::wgan;
    }
};

// Trainable anchor W for the cosine objective.
class Pivot {
public:
    explicit Pivot(std::size_t dim);

    // W <- mean(embeddings) / |mean(embeddings)|; falls back to the normalized
    // all-ones vector when the mean vanishes.
    void init_from(const Tensor& embeddings);
    // Re-initializes from `embeddings` when |W| < 1e-8. Returns true if it did.
    bool ensure_valid(const Tensor& embeddings);

    [[nodiscard]] const Tensor& weight() const { return w_; }
    [[nodiscard]] Tensor& weight() { return w_; }
    [[nodiscard]] std::size_t dim() const { return w_.cols(); }

private:
    Tensor w_;  // 1 x m
};

struct Losses {
    Tensor d_loss;  // minimized by the critic
    Tensor g_loss;  // minimized by the generator
    Tensor gap;     // the quantity the critic maximizes (d_loss == -gap)
};

// Per-row scores, each [b x 1].
Tensor cosine_similarity(const Tensor& v, const Tensor& w);
Tensor gaussian_log_density(const Tensor& v);
// |V|_1 / m - mean(log V); V must be strictly positive.
Tensor expectation_metric(const Tensor& v);
// softplus(V) + 1e-6
Tensor positive_squash(const Tensor& v);

Losses loss_std(const Tensor& v_real, const Tensor& v_fake, bool non_saturating = true);
Losses loss_wgan(const Tensor& v_real, const Tensor& v_fake);
Losses loss_maf_c(const Tensor& v_real, const Tensor& v_fake, const Pivot& pivot);
Losses loss_maf_d(const Tensor& v_real, const Tensor& v_fake);
// Applies positive_squash to both batches before scoring.
Losses loss_maf_e(const Tensor& v_real, const Tensor& v_fake);

// The per-sample value each objective pushes up for real data: s(V), V,
// cosine to W, Gaussian log-density, or the expectation metric.
Tensor realness_scalar(const Tensor& v, const ObjectiveSpec& spec, const Pivot* pivot = nullptr);

// Objective with its auxiliary state.
class Objective {
public:
    Objective(ObjectiveSpec spec, std::size_t embed_dim);

    [[nodiscard]] const ObjectiveSpec& spec() const { return spec_; }
    [[nodiscard]] std::size_t embed_dim() const { return embed_dim_; }

    [[nodiscard]] Losses losses(const Tensor& v_real, const Tensor& v_fake) const;
    [[nodiscard]] Tensor generator_loss(const Tensor& v_fake) const;
    [[nodiscard]] Tensor realness(const Tensor& v) const;

    [[nodiscard]] bool has_pivot() const { return pivot_.has_value(); }
    [[nodiscard]] Pivot& pivot();
    [[nodiscard]] const Pivot& pivot() const;
    // Trainable auxiliary parameters (the pivot for maf-c, otherwise empty).
    [[nodiscard]] std::vector<Tensor> auxiliary_parameters() const;

private:
    ObjectiveSpec spec_;
    std::size_t embed_dim_;
    std::optional<Pivot> pivot_;
};

}  // namespace mafgan

#include "mafgan/objectives.hpp"

#include <cmath>
#include <numbers>

namespace mafgan {

using ad::Matrix;

std::string_view to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::std_gan: return "std";
        case ObjectiveKind::wgan: return "wgan";
        case ObjectiveKind::maf_c: return "maf-c";
        case ObjectiveKind::maf_d: return "maf-d";
        case ObjectiveKind::maf_e: return "maf-e";
    }
    return "?";
}

ObjectiveKind parse_objective_kind(std::string_view name) {
    for (auto k : {ObjectiveKind::std_gan, ObjectiveKind::wgan, ObjectiveKind::maf_c, ObjectiveKind::maf_d,
                   ObjectiveKind::maf_e}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ad::ConfigurationError("unknown objective '" + std::string(name) + "' (expected std|wgan|maf-c|maf-d|maf-e)");
}

namespace {

void require_scalar_embedding(const Tensor& v_real, const Tensor& v_fake, const char* who) {
    if (v_real.cols() != 1 || v_fake.cols() != 1) {
        throw ad::ConfigurationError(std::string(who) + " needs a 1-dimensional embedding, got " +
                                     v_real.shape_string() + " / " + v_fake.shape_string());
    }
}

void require_same_width(const Tensor& a, const Tensor& b, const char* who) {
    if (a.cols() != b.cols()) {
        throw ad::DimensionError(std::string(who) + ": embedding widths differ, " + a.shape_string() + " vs " +
                                 b.shape_string());
    }
}

Losses critic_losses(const Tensor& score_real, const Tensor& score_fake) {
    Tensor gap = ad::mean(score_real) - ad::mean(score_fake);
    return {ad::neg(gap), ad::neg(ad::mean(score_fake)), gap};
}

Tensor row_norm(const Tensor& v) { return ad::sqrt(ad::sum_cols(ad::square(v)) + kNormEps); }

}  // namespace

Tensor cosine_similarity(const Tensor& v, const Tensor& w) {
    if (w.rows() != 1 || w.cols() != v.cols()) {
        throw ad::DimensionError("cosine_similarity: pivot " + w.shape_string() + " does not match " +
                                 v.shape_string());
    }
    const Matrix raw = v.value().rowwise().squaredNorm();
    if ((raw.array() < kNormEps * kNormEps).any()) {
        throw NumericalError("cosine objective: zero-norm embedding row");
    }
    Tensor dots = ad::matmul(v, ad::transpose(w));
    return dots / (row_norm(v) * row_norm(w));
}

Tensor gaussian_log_density(const Tensor& v) {
    const double m = static_cast<double>(v.cols());
    return ad::scale(ad::sum_cols(ad::square(v)), -0.5) - 0.5 * m * std::log(2.0 * std::numbers::pi);
}

Tensor expectation_metric(const Tensor& v) {
    if ((v.value().array() <= 0.0).any()) {
        throw ad::ContractError("expectation metric requires strictly positive embeddings");
    }
    return ad::mean_cols(v) - ad::mean_cols(ad::log(v));
}

Tensor positive_squash(const Tensor& v) { return ad::softplus(v) + kPositiveFloor; }

Losses loss_std(const Tensor& v_real, const Tensor& v_fake, bool non_saturating) {
    require_scalar_embedding(v_real, v_fake, "std objective");
    const Tensor log_real = ad::log(ad::clamp_min(ad::sigmoid(v_real), kLogClamp));
    const Tensor log_one_minus_fake = ad::log(ad::clamp_min(ad::sigmoid(ad::neg(v_fake)), kLogClamp));
    Tensor gap = ad::mean(log_real) + ad::mean(log_one_minus_fake);
    Tensor g_loss;
    if (non_saturating) {
        g_loss = ad::neg(ad::mean(ad::log(ad::clamp_min(ad::sigmoid(v_fake), kLogClamp))));
    } else {
        g_loss = ad::mean(log_one_minus_fake);
    }
    return {ad::neg(gap), g_loss, gap};
}

Losses loss_wgan(const Tensor& v_real, const Tensor& v_fake) {
    require_scalar_embedding(v_real, v_fake, "wgan objective");
    return critic_losses(v_real, v_fake);
}

Losses loss_maf_c(const Tensor& v_real, const Tensor& v_fake, const Pivot& pivot) {
    require_same_width(v_real, v_fake, "maf-c");
    return critic_losses(cosine_similarity(v_real, pivot.weight()), cosine_similarity(v_fake, pivot.weight()));
}

Losses loss_maf_d(const Tensor& v_real, const Tensor& v_fake) {
    require_same_width(v_real, v_fake, "maf-d");
    return critic_losses(gaussian_log_density(v_real), gaussian_log_density(v_fake));
}

Losses loss_maf_e(const Tensor& v_real, const Tensor& v_fake) {
    require_same_width(v_real, v_fake, "maf-e");
    return critic_losses(expectation_metric(positive_squash(v_real)), expectation_metric(positive_squash(v_fake)));
}

Tensor realness_scalar(const Tensor& v, const ObjectiveSpec& spec, const Pivot* pivot) {
    switch (spec.kind) {
        case ObjectiveKind::std_gan: return ad::sigmoid(v);
        case ObjectiveKind::wgan: return v;
        case ObjectiveKind::maf_c:
            if (pivot == nullptr) {
                throw ad::ConfigurationError("maf-c realness needs a pivot");
            }
            return cosine_similarity(v, pivot->weight());
        case ObjectiveKind::maf_d: return gaussian_log_density(v);
        case ObjectiveKind::maf_e: return expectation_metric(positive_squash(v));
    }
    throw ad::ConfigurationError("unknown objective");
}

// ---- Pivot --------------------------------------------------------------

Pivot::Pivot(std::size_t dim) {
    if (dim == 0) {
        throw ad::ConfigurationError("pivot dimension must be positive");
    }
    w_ = Tensor::parameter(Matrix::Constant(1, dim, 1.0 / std::sqrt(static_cast<double>(dim))));
}

void Pivot::init_from(const Tensor& embeddings) {
    if (embeddings.cols() != dim()) {
        throw ad::DimensionError("pivot init: embedding width " + embeddings.shape_string() + " vs pivot " +
                                 w_.shape_string());
    }
    Matrix mean = embeddings.value().colwise().mean();
    const double norm = mean.norm();
    Matrix& w = w_.mutable_value();
    if (norm > 1e-8 && std::isfinite(norm)) {
        w = mean / norm;
    } else {
        w = Matrix::Constant(1, dim(), 1.0 / std::sqrt(static_cast<double>(dim())));
    }
}

bool Pivot::ensure_valid(const Tensor& embeddings) {
    const double norm = w_.value().norm();
    if (norm >= 1e-8 && std::isfinite(norm)) {
        return false;
    }
    init_from(embeddings);
    return true;
}

// ---- Objective ----------------------------------------------------------

Objective::Objective(ObjectiveSpec spec, std::size_t embed_dim) : spec_(spec), embed_dim_(embed_dim) {
    if (spec_.requires_scalar_embedding() && embed_dim_ != 1) {
        throw ad::ConfigurationError(std::string(to_string(spec_.kind)) +
                                     " objective requires embedding dimension 1, got " + std::to_string(embed_dim_));
    }
    if (spec_.kind == ObjectiveKind::maf_c) {
        pivot_.emplace(embed_dim_);
    }
}

Losses Objective::losses(const Tensor& v_real, const Tensor& v_fake) const {
    switch (spec_.kind) {
        case ObjectiveKind::std_gan: return loss_std(v_real, v_fake, spec_.non_saturating);
        case ObjectiveKind::wgan: return loss_wgan(v_real, v_fake);
        case ObjectiveKind::maf_c: return loss_maf_c(v_real, v_fake, *pivot_);
        case ObjectiveKind::maf_d: return loss_maf_d(v_real, v_fake);
        case ObjectiveKind::maf_e: return loss_maf_e(v_real, v_fake);
    }
    throw ad::ConfigurationError("unknown objective");
}

Tensor Objective::generator_loss(const Tensor& v_fake) const {
    if (spec_.kind == ObjectiveKind::std_gan) {
        if (v_fake.cols() != 1) {
            throw ad::ConfigurationError("std objective needs a 1-dimensional embedding");
        }
        if (spec_.non_saturating) {
            return ad::neg(ad::mean(ad::log(ad::clamp_min(ad::sigmoid(v_fake), kLogClamp))));
        }
        return ad::mean(ad::log(ad::clamp_min(ad::sigmoid(ad::neg(v_fake)), kLogClamp)));
    }
    return ad::neg(ad::mean(realness(v_fake)));
}

Tensor Objective::realness(const Tensor& v) const { return realness_scalar(v, spec_, pivot_ ? &*pivot_ : nullptr); }

Pivot& Objective::pivot() {
    if (!pivot_) {
        throw ad::ConfigurationError("objective has no pivot");
    }
    return *pivot_;
}

const Pivot& Objective::pivot() const {
    if (!pivot_) {
        throw ad::ConfigurationError("objective has no pivot");
    }
    return *pivot_;
}

std::vector<Tensor> Objective::auxiliary_parameters() const {
    if (pivot_) {
        return {pivot_->weight()};
    }
    return {};
}

}  // namespace mafgan

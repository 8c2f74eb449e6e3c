#include "mafgan/constraints.hpp"

#include <algorithm>
#include <cmath>

namespace mafgan {

using ad::Matrix;

std::string_view to_string(ConstraintKind kind) {
    switch (kind) {
        case ConstraintKind::none: return "none";
        case ConstraintKind::clip: return "clip";
        case ConstraintKind::gp: return "gp";
        case ConstraintKind::tc: return "tc";
    }
    return "?";
}

std::string_view to_string(TcMetric metric) {
    switch (metric) {
        case TcMetric::mse: return "mse";
        case TcMetric::l1: return "l1";
        case TcMetric::cosine: return "cosine";
    }
    return "?";
}

ConstraintKind parse_constraint_kind(std::string_view name) {
    for (auto k : {ConstraintKind::none, ConstraintKind::clip, ConstraintKind::gp, ConstraintKind::tc}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw ad::ConfigurationError("unknown constraint '" + std::string(name) + "' (expected none|clip|gp|tc)");
}

TcMetric parse_tc_metric(std::string_view name) {
    for (auto m : {TcMetric::mse, TcMetric::l1, TcMetric::cosine}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ad::ConfigurationError("unknown tc metric '" + std::string(name) + "' (expected mse|l1|cosine)");
}

std::vector<std::string> ConstraintSpec::violations() const {
    std::vector<std::string> out;
    if (kind == ConstraintKind::clip && !(clip > 0.0)) {
        out.emplace_back("constraint.clip must be > 0 when constraint.kind = clip");
    }
    if (!(gp_weight >= 0.0)) {
        out.emplace_back("constraint.gp_weight must be >= 0");
    }
    if (!(tc_weight >= 0.0)) {
        out.emplace_back("constraint.tc_weight must be >= 0");
    }
    if (!(delta_std >= 0.0)) {
        out.emplace_back("constraint.delta_std must be >= 0");
    }
    if (!(k_scale > 0.0)) {
        out.emplace_back("constraint.k_scale must be > 0");
    }
    if (probe_layer < 1 || probe_layer > nn::Discriminator::kLayers) {
        out.emplace_back("constraint.probe_layer must be in [1, 3]");
    }
    return out;
}

void ConstraintSpec::validate() const {
    const auto v = violations();
    if (!v.empty()) {
        std::string msg = "invalid constraint:";
        for (const auto& s : v) {
            msg += "\n  " + s;
        }
        throw ad::ConfigurationError(msg);
    }
}

std::vector<double> sample_mix_coefficients(Rng& rng, std::size_t n) {
    std::vector<double> eps(n);
    for (auto& e : eps) {
        e = rng.uniform(0.0, 1.0);
        if (e >= 1.0) {
            e = std::nextafter(1.0, 0.0);
        }
    }
    return eps;
}

namespace {

Tensor column(std::span<const double> values) {
    Matrix m(values.size(), 1);
    std::copy(values.begin(), values.end(), m.data());
    return Tensor::constant(std::move(m));
}

void check_eps(std::span<const double> eps, std::size_t rows) {
    if (eps.size() != rows) {
        throw ad::ContractError("mixup: " + std::to_string(eps.size()) + " coefficients for " + std::to_string(rows) +
                                " rows");
    }
    for (double e : eps) {
        if (!(e >= 0.0 && e < 1.0)) {
            throw ad::ContractError("mixup: coefficient " + std::to_string(e) + " outside [0, 1)");
        }
    }
}

Tensor mix(const Tensor& a, const Tensor& b, const Tensor& weight_a) {
    // weight_a * a + (1 - weight_a) * b
    return ad::mul(a, weight_a) + ad::mul(b, ad::add_scalar(ad::neg(weight_a), 1.0));
}

Tensor tc_residual(const Tensor& v_mixed_input, const Tensor& v_real, const Tensor& v_fake,
                   std::span<const double> eps, std::span<const double> delta, const TcOptions& options) {
    const Tensor e = column(eps);
    const Tensor mixed_embedding = options.swap_embedding_order ? mix(v_fake, v_real, e) : mix(v_real, v_fake, e);
    Tensor value = ad::mean(tc_distance(v_mixed_input, mixed_embedding, options.metric));
    if (!delta.empty()) {
        if (delta.size() != eps.size()) {
            throw ad::ContractError("topological_consistency: perturbation count differs from batch size");
        }
        double s = 0.0;
        for (double d : delta) {
            s += d;
        }
        value = value + s / static_cast<double>(delta.size());
    }
    return value;
}

}  // namespace

Tensor mixup(const Tensor& x_real, const Tensor& x_fake, std::span<const double> eps) {
    if (x_real.shape() != x_fake.shape()) {
        throw ad::DimensionError("mixup: shapes differ, " + x_real.shape_string() + " vs " + x_fake.shape_string());
    }
    check_eps(eps, x_real.rows());
    return mix(x_real, x_fake, column(eps));
}

Tensor tc_distance(const Tensor& a, const Tensor& b, TcMetric metric) {
    if (a.shape() != b.shape()) {
        throw ad::DimensionError("tc_distance: shapes differ, " + a.shape_string() + " vs " + b.shape_string());
    }
    switch (metric) {
        case TcMetric::mse: return ad::mean_cols(ad::square(a - b));
        case TcMetric::l1: return ad::mean_cols(ad::abs(a - b));
        case TcMetric::cosine: {
            const Tensor dot = ad::sum_cols(a * b);
            const Tensor norms = ad::sqrt(ad::sum_cols(ad::square(a)) * ad::sum_cols(ad::square(b)) + 1e-24);
            return ad::add_scalar(ad::neg(dot / norms), 1.0);
        }
    }
    throw ad::ConfigurationError("unknown tc metric");
}

Tensor topological_consistency(const EmbedFn& embed, const Tensor& x_real, const Tensor& x_fake,
                               std::span<const double> eps, std::span<const double> delta, TcOptions options) {
    const Tensor xr = x_real.detach();
    const Tensor xg = x_fake.detach();
    return topological_consistency(embed, xr, xg, embed(xr), embed(xg), eps, delta, options);
}

Tensor topological_consistency(const EmbedFn& embed, const Tensor& x_real, const Tensor& x_fake,
                               const Tensor& v_real, const Tensor& v_fake, std::span<const double> eps,
                               std::span<const double> delta, TcOptions options) {
    const Tensor x_hat = mixup(x_real.detach(), x_fake.detach(), eps);
    const Tensor v_hat = embed(x_hat);
    if (v_hat.shape() != v_real.shape() || v_hat.shape() != v_fake.shape()) {
        throw ad::DimensionError("topological_consistency: embedding shapes differ");
    }
    return tc_residual(v_hat, v_real, v_fake, eps, delta, options);
}

Tensor gradient_penalty(const EmbedFn& realness, const Tensor& x_real, const Tensor& x_fake,
                        std::span<const double> eps) {
    Tensor x_hat;
    {
        ad::NoGradGuard no_grad;
        x_hat = Tensor::parameter(mixup(x_real.detach(), x_fake.detach(), eps).value());
    }
    const Tensor r = realness(x_hat);
    if (r.cols() != 1 || r.rows() != x_hat.rows()) {
        throw ad::DimensionError("gradient_penalty: realness must be [b x 1], got " + r.shape_string());
    }
    const std::vector<Tensor> inputs{x_hat};
    const Tensor g = ad::gradients(ad::sum(r), inputs, true)[0];
    const Tensor norms = ad::sqrt(ad::sum_cols(ad::square(g)) + 1e-12);
    return ad::mean(ad::square(norms - 1.0));
}

void weight_clip(const std::vector<Tensor>& params, double c) {
    for (Tensor t : params) {
        Matrix& v = t.mutable_value();
        v = v.cwiseMax(-c).cwiseMin(c);
    }
}

ProbeStats continuity_probe(const nn::Discriminator& d, const Tensor& x_real, const Tensor& x_fake,
                            std::size_t layer, std::size_t trials, Rng& rng) {
    ad::NoGradGuard no_grad;
    const EmbedFn embed = [&d, layer](const Tensor& x) { return d.features(x, layer); };
    const Tensor v_real = embed(x_real);
    const Tensor v_fake = embed(x_fake);
    std::vector<double> values;
    values.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        const auto eps = sample_mix_coefficients(rng, x_real.rows());
        values.push_back(topological_consistency(embed, x_real, x_fake, v_real, v_fake, eps, {}).item());
    }
    ProbeStats stats;
    if (values.empty()) {
        return stats;
    }
    for (double v : values) {
        stats.mean += v;
    }
    stats.mean /= static_cast<double>(values.size());
    for (double v : values) {
        stats.variance += (v - stats.mean) * (v - stats.mean);
    }
    stats.variance /= static_cast<double>(values.size());
    return stats;
}

}  // namespace mafgan

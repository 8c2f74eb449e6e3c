#include "mafgan/constraints.hpp"
#include "mafgan/gradcheck.hpp"
#include "mafgan/networks.hpp"
#include "mafgan/theorems.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mafgan;
using ad::Matrix;

namespace {

Tensor rows(std::initializer_list<std::initializer_list<double>> r) { return Tensor::from_rows(r); }

// Makes every maxout piece of layer 0 identical, so features(x, 1) is affine.
void collapse_first_layer(nn::Discriminator& d) {
    auto params = d.parameters();
    for (std::size_t k = 1; k < d.config().pieces; ++k) {
        params[2 * k].tensor.mutable_value() = params[0].tensor.value();
        params[2 * k + 1].tensor.mutable_value() = params[1].tensor.value();
    }
}

}  // namespace

TEST(Mixup, HandValuesAndEndpoints) {
    const std::vector<double> half{0.5};
    EXPECT_EQ(mixup(rows({{2, 0}}), rows({{0, 2}}), half).value(), rows({{1, 1}}).value());

    Rng rng(1, "test");
    const Tensor xr = Tensor::constant(rng.normal_matrix(4, 2));
    const Tensor xg = Tensor::constant(rng.normal_matrix(4, 2));
    const std::vector<double> zero(4, 0.0);
    EXPECT_EQ(mixup(xr, xg, zero).value(), xg.value());
    const std::vector<double> near_one(4, std::nextafter(1.0, 0.0));
    EXPECT_LT((mixup(xr, xg, near_one).value() - xr.value()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Mixup, CoefficientOutsideUnitIntervalIsContractError) {
    const Tensor x = rows({{1, 2}});
    for (double bad : {1.0, -0.1, std::nan("")}) {
        const std::vector<double> eps{bad};
        EXPECT_THROW((void)mixup(x, x, eps), ad::ContractError);
    }
    const std::vector<double> too_many{0.1, 0.2};
    EXPECT_THROW((void)mixup(x, x, too_many), ad::ContractError);
}

TEST(Mixup, SampledCoefficientsInRange) {
    Rng rng(2, "test");
    for (double e : sample_mix_coefficients(rng, 10000)) {
        EXPECT_GE(e, 0.0);
        EXPECT_LT(e, 1.0);
    }
}

TEST(TopologicalConsistency, SquareCriticHandEvaluation) {
    const EmbedFn square = [](const Tensor& x) { return ad::square(x); };
    const std::vector<double> eps{0.5};
    EXPECT_DOUBLE_EQ(topological_consistency(square, rows({{1}}), rows({{-1}}), eps, {}).item(), 1.0);
}

TEST(TopologicalConsistency, AffineCriticGivesZeroForEveryMetric) {
    Rng rng(3, "test");
    for (TcMetric metric : {TcMetric::mse, TcMetric::l1, TcMetric::cosine}) {
        for (int trial = 0; trial < 50; ++trial) {
            const Tensor a = Tensor::constant(rng.normal_matrix(2, 6));
            const Tensor b = Tensor::constant(rng.normal_matrix(1, 6));
            const EmbedFn affine = [&](const Tensor& x) { return ad::affine(x, {a, b}); };
            const Tensor xr = Tensor::constant(rng.normal_matrix(8, 2, 3.0));
            const Tensor xg = Tensor::constant(rng.normal_matrix(8, 2, 3.0));
            const auto eps = sample_mix_coefficients(rng, 8);
            EXPECT_LE(std::abs(topological_consistency(affine, xr, xg, eps, {}, {metric}).item()), 1e-12);
        }
    }
}

TEST(TopologicalConsistency, EndpointsVanishForDeepCritic) {
    nn::Discriminator d({2, 16, 2, 4});
    nn::init_params(d, 4);
    const EmbedFn embed = [&](const Tensor& x) { return d.forward(x); };
    Rng rng(4, "test");
    const Tensor xr = Tensor::constant(rng.normal_matrix(6, 2));
    const Tensor xg = Tensor::constant(rng.normal_matrix(6, 2));
    const std::vector<double> zero(6, 0.0);
    EXPECT_EQ(topological_consistency(embed, xr, xg, zero, {}).item(), 0.0);
    const std::vector<double> near_one(6, 1.0 - 1e-9);
    EXPECT_LT(topological_consistency(embed, xr, xg, near_one, {}).item(), 1e-12);
}

TEST(TopologicalConsistency, PerturbationAddsItsMean) {
    nn::Discriminator d({2, 16, 2, 4});
    nn::init_params(d, 5);
    const EmbedFn embed = [&](const Tensor& x) { return d.forward(x); };
    Rng rng(5, "test");
    const Tensor xr = Tensor::constant(rng.normal_matrix(4, 2));
    const Tensor xg = Tensor::constant(rng.normal_matrix(4, 2));
    const auto eps = sample_mix_coefficients(rng, 4);
    const std::vector<double> delta{0.1, -0.3, 0.05, 0.25};
    const double base = topological_consistency(embed, xr, xg, eps, {}).item();
    EXPECT_NEAR(topological_consistency(embed, xr, xg, eps, delta).item(), base + 0.025, 1e-15);
    const std::vector<double> short_delta{0.1};
    EXPECT_THROW((void)topological_consistency(embed, xr, xg, eps, short_delta), ad::ContractError);
}

TEST(TopologicalConsistency, NoGradientReachesGenerator) {
    nn::Generator g({4, 8, 2, 2});
    nn::init_params(g, 6);
    nn::Discriminator d({2, 8, 2, 3});
    nn::init_params(d, 7);
    Rng rng(6, "test");
    const Tensor fake = g.forward(Tensor::constant(rng.normal_matrix(5, 4)), ad::Mode::train);
    const Tensor real = Tensor::constant(rng.normal_matrix(5, 2));
    const EmbedFn embed = [&](const Tensor& x) { return d.forward(x); };
    const Tensor tc = topological_consistency(embed, real, fake, sample_mix_coefficients(rng, 5), {});
    const ad::Graph graph = ad::trace(tc);
    for (const auto& p : g.parameters()) {
        EXPECT_FALSE(graph.contains(p.tensor)) << p.name;
    }
    ad::backward(tc);
    for (const auto& p : g.parameters()) {
        EXPECT_FALSE(p.tensor.has_grad()) << p.name;
    }
    for (const auto& p : d.parameters()) {
        EXPECT_TRUE(p.tensor.has_grad()) << p.name;
    }
}

TEST(TopologicalConsistency, MetricNames) {
    EXPECT_EQ(parse_tc_metric("l1"), TcMetric::l1);
    EXPECT_THROW((void)parse_tc_metric("huber"), ad::ConfigurationError);
    EXPECT_EQ(parse_constraint_kind("gp"), ConstraintKind::gp);
    EXPECT_THROW((void)parse_constraint_kind("spectral"), ad::ConfigurationError);
}

TEST(TopologicalConsistency, GradientsMatchFiniteDifferences) {
    Rng rng(7, "test");
    for (TcMetric metric : {TcMetric::mse, TcMetric::l1, TcMetric::cosine}) {
        for (int trial = 0; trial < 5; ++trial) {
            nn::Discriminator d({2, 6, 2, 3});
            nn::init_params(d, rng);
            const Tensor xr = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
            const Tensor xg = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
            const auto eps = sample_mix_coefficients(rng, 6);
            const EmbedFn embed = [&](const Tensor& x) { return d.forward(x); };
            auto fn = [&] { return topological_consistency(embed, xr, xg, eps, {}, {metric}); };
            const auto report = ad::finite_diff_check(fn, d.parameters(), 1e-3, 1e-4, ad::DiffScheme::ridders);
            EXPECT_LT(report.max_rel_error(), 1e-4) << to_string(metric);
        }
    }
}

TEST(GradientPenalty, LinearCritics) {
    Rng rng(8, "test");
    const Tensor xr = Tensor::constant(rng.normal_matrix(10, 2));
    const Tensor xg = Tensor::constant(rng.normal_matrix(10, 2));
    const auto eps = sample_mix_coefficients(rng, 10);

    const Tensor unit = Tensor::constant(Matrix(Eigen::Vector2d(0.6, -0.8)));
    const EmbedFn unit_critic = [&](const Tensor& x) { return ad::matmul(x, unit); };
    EXPECT_LT(gradient_penalty(unit_critic, xr, xg, eps).item(), 1e-20);

    const EmbedFn doubled = [](const Tensor& x) { return ad::scale(x, 2.0); };
    const std::vector<double> e1{0.3, 0.9};
    EXPECT_NEAR(gradient_penalty(doubled, rows({{1}, {2}}), rows({{-1}, {0}}), e1).item(), 1.0, 1e-12);

    const EmbedFn constant = [](const Tensor& x) { return Tensor::full(x.rows(), 1, 0.4); };
    EXPECT_NEAR(gradient_penalty(constant, xr, xg, eps).item(), 1.0, 1e-5);
}

TEST(GradientPenalty, TrainsTheCriticThroughTheInputGradient) {
    Rng rng(9, "test");
    for (int trial = 0; trial < 5; ++trial) {
        nn::Discriminator d({2, 6, 2, 1});
        nn::init_params(d, rng);
        const Tensor xr = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
        const Tensor xg = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
        const auto eps = sample_mix_coefficients(rng, 6);
        const EmbedFn realness = [&](const Tensor& x) { return d.forward(x); };
        auto fn = [&] { return gradient_penalty(realness, xr, xg, eps); };
        const auto report = ad::finite_diff_check(fn, d.parameters(), 1e-3, 1e-4, ad::DiffScheme::ridders);
        EXPECT_LT(report.max_rel_error(), 1e-4);
        EXPECT_GT(report.checked(), 0u);
    }
}

TEST(GradientPenalty, FirstOrderOnlyOpIsUnsupported) {
    ad::BatchNormStats stats;
    const Tensor gamma = Tensor::parameter(rows({{1}}).value());
    const Tensor beta = Tensor::parameter(rows({{0}}).value());
    const EmbedFn realness = [&](const Tensor& x) {
        return ad::batch_norm(ad::sum_cols(ad::square(x)), gamma, beta, stats, ad::Mode::train);
    };
    Rng rng(10, "test");
    const Tensor xr = Tensor::constant(rng.normal_matrix(4, 2));
    const Tensor xg = Tensor::constant(rng.normal_matrix(4, 2));
    EXPECT_THROW((void)gradient_penalty(realness, xr, xg, sample_mix_coefficients(rng, 4)), ad::UnsupportedOpError);
}

TEST(WeightClip, ClampsIntoBox) {
    const Tensor w = Tensor::parameter(rows({{0.5, -0.5, 0.004}}).value());
    weight_clip({w}, 0.01);
    EXPECT_EQ(w.value(), rows({{0.01, -0.01, 0.004}}).value());
}

TEST(WeightClip, IdempotentAndOrderIndependent) {
    nn::Discriminator a({2, 16, 2, 4});
    nn::Discriminator b({2, 16, 2, 4});
    nn::init_params(a, 11);
    nn::init_params(b, 11);
    auto ta = a.parameter_tensors();
    auto tb = b.parameter_tensors();
    std::reverse(tb.begin(), tb.end());
    weight_clip(ta, 0.05);
    weight_clip(tb, 0.05);
    const auto once = nn::flatten_params(a).values;
    EXPECT_EQ(once, nn::flatten_params(b).values);
    weight_clip(ta, 0.05);
    EXPECT_EQ(nn::flatten_params(a).values, once);
    for (double v : once) {
        EXPECT_LE(std::abs(v), 0.05);
    }
}

TEST(ConstraintSpec, Violations) {
    ConstraintSpec spec;
    EXPECT_TRUE(spec.violations().empty());
    spec.kind = ConstraintKind::clip;
    spec.clip = 0.0;
    spec.tc_weight = -1.0;
    spec.delta_std = -0.1;
    spec.k_scale = 0.0;
    EXPECT_EQ(spec.violations().size(), 4u);
    EXPECT_THROW(spec.validate(), ad::ConfigurationError);
}

TEST(ContinuityProbe, AffineLayerHasZeroMean) {
    nn::Discriminator d({2, 16, 2, 4});
    nn::init_params(d, 12);
    collapse_first_layer(d);
    Rng rng(12, "test");
    const Tensor xr = Tensor::constant(rng.normal_matrix(32, 2));
    const Tensor xg = Tensor::constant(rng.normal_matrix(32, 2));
    const ProbeStats s = continuity_probe(d, xr, xg, 1, 8, rng);
    EXPECT_LT(s.mean, 1e-25);
    EXPECT_GE(s.variance, 0.0);
}

TEST(ContinuityProbe, DeepLayerIsPositiveWithFiniteVariance) {
    nn::Discriminator d({2, 16, 2, 4});
    nn::init_params(d, 13);
    Rng rng(13, "test");
    const Tensor xr = Tensor::constant(rng.normal_matrix(32, 2, 2.0));
    const Tensor xg = Tensor::constant(rng.normal_matrix(32, 2, 2.0));
    for (std::size_t layer = 1; layer <= nn::Discriminator::kLayers; ++layer) {
        const ProbeStats s = continuity_probe(d, xr, xg, layer, 16, rng);
        EXPECT_GT(s.mean, 0.0);
        EXPECT_GE(s.variance, 0.0);
        EXPECT_TRUE(std::isfinite(s.variance));
    }
}

TEST(Theorems, SuitePasses) {
    for (const auto& c : theorem_suite()) {
        EXPECT_TRUE(c.passed) << c.name << " observed " << c.observed << " (" << c.detail << ")";
    }
}

TEST(Theorems, SwappedMixingOrderBreaksAffineZero) {
    TheoremOptions opts;
    opts.swap_embedding_order = true;
    std::size_t failed_affine = 0;
    for (const auto& c : theorem_suite(opts)) {
        if (c.name.starts_with("tc_affine_zero")) {
            EXPECT_FALSE(c.passed) << c.name;
            ++failed_affine;
        }
    }
    EXPECT_EQ(failed_affine, 3u);
}

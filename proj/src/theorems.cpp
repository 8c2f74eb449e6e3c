#include "mafgan/theorems.hpp"

#include "mafgan/constraints.hpp"
#include "mafgan/io.hpp"
#include "mafgan/networks.hpp"
#include "mafgan/objectives.hpp"
#include "mafgan/rng.hpp"

#include <algorithm>
#include <cmath>

namespace mafgan {

namespace {

using ad::Matrix;

ad::AffineMap random_affine(Rng& rng, std::size_t in, std::size_t out, bool with_bias) {
    ad::AffineMap map{Tensor::parameter(rng.normal_matrix(in, out)), Tensor::parameter(Matrix::Zero(1, out))};
    if (with_bias) {
        map.bias.mutable_value() = rng.normal_matrix(1, out);
    }
    return map;
}

CheckResult make(std::string name, double tol, double observed, bool passed, std::string detail = {}) {
    return {std::move(name), tol, observed, passed, std::move(detail)};
}

std::vector<CheckResult> affine_zero(const TheoremOptions& opt) {
    std::vector<CheckResult> out;
    constexpr std::size_t kRows = 10;
    for (TcMetric metric : {TcMetric::mse, TcMetric::l1, TcMetric::cosine}) {
        Rng rng(opt.seed, std::string("theorem.affine.") + std::string(to_string(metric)));
        double worst = 0.0;
        std::size_t triples = 0;
        while (triples < opt.affine_triples) {
            const std::size_t b = std::min(kRows, opt.affine_triples - triples);
            const ad::AffineMap map = random_affine(rng, 2, 16, true);
            const EmbedFn embed = [&map](const Tensor& x) { return ad::affine(x, map); };
            const Tensor xr = Tensor::constant(rng.normal_matrix(b, 2, 2.0));
            const Tensor xg = Tensor::constant(rng.normal_matrix(b, 2, 2.0));
            const auto eps = sample_mix_coefficients(rng, b);
            ad::NoGradGuard no_grad;
            const double v = topological_consistency(embed, xr, xg, eps, {}, {metric, opt.swap_embedding_order}).item();
            worst = std::max(worst, std::abs(v));
            triples += b;
        }
        out.push_back(make("tc_affine_zero_" + std::string(to_string(metric)), 1e-12, worst, worst <= 1e-12,
                           std::to_string(triples) + " triples"));
    }
    return out;
}

double sq(const Matrix& a, const Matrix& b) { return (a - b).squaredNorm(); }

std::vector<CheckResult> mse_expansion(const TheoremOptions& opt) {
    Rng rng(opt.seed, "theorem.mse");
    nn::Discriminator d({2, 32, 2, 8});
    nn::init_params(d, rng);
    ad::NoGradGuard no_grad;

    double worst_identity = 0.0;
    double worst_linear = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const Matrix xr = rng.normal_matrix(1, 2, 2.0);
        const Matrix xg = rng.normal_matrix(1, 2, 2.0);
        const double eps = rng.uniform();
        const Matrix c2 = eps * xr;
        const Matrix c3 = (1.0 - eps) * xg;
        const Matrix c1 = c2 + c3;
        auto f = [&d](const Matrix& x) { return Matrix(d.forward(Tensor::constant(x)).value()); };
        const Matrix a = f(c1);
        const Matrix b = f(c2);
        const Matrix c = f(c3);
        const Matrix zero = Matrix::Zero(a.rows(), a.cols());
        const double lhs = sq(a, b + c);
        const double rhs = sq(a, b) + sq(a, c) - sq(b, c) - sq(a, zero) + sq(b, zero) + sq(c, zero);
        worst_identity = std::max(worst_identity, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));

        const ad::AffineMap lin = random_affine(rng, 2, 8, false);
        auto g = [&lin](const Matrix& x) { return Matrix(ad::affine(Tensor::constant(x), lin).value()); };
        worst_linear = std::max(worst_linear, sq(g(c1), g(c2) + g(c3)));
    }
    return {make("mse_expansion_identity", 1e-10, worst_identity, worst_identity <= 1e-10, "100 deep critics"),
            make("mse_linear_split_zero", 1e-12, worst_linear, worst_linear <= 1e-12, "100 bias-free linear maps")};
}

CheckResult deep_positive(const TheoremOptions& opt) {
    std::size_t positive = 0;
    for (std::size_t s = 0; s < opt.deep_seeds; ++s) {
        Rng rng(opt.seed + s, "theorem.deep");
        nn::Discriminator d({2, 64, 2, 16});
        nn::init_params(d, rng);
        const EmbedFn embed = [&d](const Tensor& x) { return d.forward(x); };
        const Tensor xr = Tensor::constant(rng.normal_matrix(64, 2, 2.0));
        const Tensor xg = Tensor::constant(rng.normal_matrix(64, 2, 2.0));
        const auto eps = sample_mix_coefficients(rng, 64);
        ad::NoGradGuard no_grad;
        if (topological_consistency(embed, xr, xg, eps, {}).item() > 0.0) {
            ++positive;
        }
    }
    const double frac = static_cast<double>(positive) / static_cast<double>(std::max<std::size_t>(1, opt.deep_seeds));
    return make("tc_deep_positive", 0.99, frac, frac >= 0.99,
                std::to_string(positive) + "/" + std::to_string(opt.deep_seeds) + " seeds");
}

// Candidates: half affine (residual exactly zero), half deep. Scaling the
// adversarial term by K must not move the zero set or the best candidate
// inside it, and must scale the critic gradient by exactly K.
std::vector<CheckResult> k_invariance(const TheoremOptions& opt) {
    Rng rng(opt.seed, "theorem.k");
    const Tensor xr = Tensor::constant(rng.normal_matrix(32, 2, 2.0));
    const Tensor xg = Tensor::constant(rng.normal_matrix(32, 2, 2.0));
    const auto eps = sample_mix_coefficients(rng, 32);

    struct Candidate {
        EmbedFn embed;
        std::vector<Tensor> params;
    };
    std::vector<ad::AffineMap> maps;
    std::vector<nn::Discriminator> deep;
    for (int i = 0; i < 10; ++i) {
        maps.push_back(random_affine(rng, 2, 8, true));
        deep.emplace_back(nn::DiscriminatorConfig{2, 16, 2, 8});
        nn::init_params(deep.back(), rng);
    }
    std::vector<Candidate> candidates;
    for (auto& m : maps) {
        candidates.push_back({[&m](const Tensor& x) { return ad::affine(x, m); }, {m.weight, m.bias}});
    }
    for (auto& d : deep) {
        candidates.push_back({[&d](const Tensor& x) { return d.forward(x); }, d.parameter_tensors()});
    }

    std::vector<bool> zero_set_ref;
    std::size_t argmax_ref = 0;
    std::size_t mismatches = 0;
    double worst_grad = 0.0;
    for (double k : {1.0, 5.0, 10.0}) {
        std::vector<bool> zero_set;
        double best = -1e300;
        std::size_t argmax = candidates.size();
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            ad::NoGradGuard no_grad;
            const auto& c = candidates[i];
            const double tc = topological_consistency(c.embed, xr, xg, eps, {}).item();
            const bool zero = std::abs(tc) <= 1e-12;
            zero_set.push_back(zero);
            const double objective = k * loss_maf_e(c.embed(xr), c.embed(xg)).gap.item();
            if (zero && objective > best) {
                best = objective;
                argmax = i;
            }
        }
        if (k == 1.0) {
            zero_set_ref = zero_set;
            argmax_ref = argmax;
        } else if (zero_set != zero_set_ref || argmax != argmax_ref) {
            ++mismatches;
        }

        const auto& c = candidates[candidates.size() - 1];
        const Tensor base = loss_maf_e(c.embed(xr), c.embed(xg)).d_loss;
        const auto g1 = ad::gradients(base, c.params, false);
        const auto gk = ad::gradients(base * k, c.params, false);
        for (std::size_t p = 0; p < g1.size(); ++p) {
            const Matrix diff = gk[p].value() - k * g1[p].value();
            const double scale = std::max(1e-300, k * g1[p].value().cwiseAbs().maxCoeff());
            worst_grad = std::max(worst_grad, diff.cwiseAbs().maxCoeff() / scale);
        }
    }
    return {make("k_scale_zero_set_and_argmax", 0.0, static_cast<double>(mismatches), mismatches == 0,
                 "K in {1,5,10}, 20 candidates"),
            make("k_scale_gradient_proportional", 1e-12, worst_grad, worst_grad <= 1e-12)};
}

CheckResult endpoint(const TheoremOptions& opt) {
    Rng rng(opt.seed, "theorem.endpoint");
    nn::Discriminator d({2, 32, 2, 16});
    nn::init_params(d, rng);
    const EmbedFn embed = [&d](const Tensor& x) { return d.forward(x); };
    const Tensor xr = Tensor::constant(rng.normal_matrix(64, 2, 2.0));
    const Tensor xg = Tensor::constant(rng.normal_matrix(64, 2, 2.0));
    ad::NoGradGuard no_grad;
    const std::vector<double> zeros(64, 0.0);
    const double v = topological_consistency(embed, xr, xg, zeros, {}).item();
    return make("tc_endpoint_eps_zero", 0.0, std::abs(v), v == 0.0);
}

std::vector<CheckResult> penalty(const TheoremOptions& opt) {
    Rng rng(opt.seed, "theorem.gp");
    const Tensor xr = Tensor::constant(rng.normal_matrix(32, 3));
    const Tensor xg = Tensor::constant(rng.normal_matrix(32, 3));
    const auto eps = sample_mix_coefficients(rng, 32);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        Matrix w = rng.normal_matrix(3, 1);
        w /= w.norm();
        const ad::AffineMap map{Tensor::parameter(w), Tensor::parameter(rng.normal_matrix(1, 1))};
        const EmbedFn realness = [&map](const Tensor& x) { return ad::affine(x, map); };
        worst = std::max(worst, std::abs(gradient_penalty(realness, xr, xg, eps).item()));
    }
    return {make("gp_unit_linear_zero", 1e-10, worst, worst <= 1e-10, "20 unit-norm linear critics")};
}

CheckResult no_generator_gradient(const TheoremOptions& opt) {
    Rng rng(opt.seed, "theorem.graph");
    nn::Generator g({8, 16, 2, 2});
    nn::init_params(g, rng);
    nn::Discriminator d({2, 16, 2, 4});
    nn::init_params(d, rng);
    const Tensor z = Tensor::constant(rng.normal_matrix(16, 8));
    const Tensor xg = g.forward(z, ad::Mode::train);
    const Tensor xr = Tensor::constant(rng.normal_matrix(16, 2));
    const auto eps = sample_mix_coefficients(rng, 16);
    const EmbedFn embed = [&d](const Tensor& x) { return d.forward(x); };
    const Tensor tc = topological_consistency(embed, xr, xg, eps, {});
    const ad::Graph graph = ad::trace(tc);
    std::size_t reached = 0;
    for (const auto& p : g.parameter_tensors()) {
        reached += graph.contains(p) ? 1 : 0;
    }
    std::size_t critic = 0;
    for (const auto& p : d.parameter_tensors()) {
        critic += graph.contains(p) ? 1 : 0;
    }
    return make("tc_no_generator_path", 0.0, static_cast<double>(reached), reached == 0 && critic > 0,
                std::to_string(critic) + " critic tensors on the graph");
}

}  // namespace

std::vector<CheckResult> theorem_suite(const TheoremOptions& options) {
    std::vector<CheckResult> out = affine_zero(options);
    for (auto& r : mse_expansion(options)) {
        out.push_back(std::move(r));
    }
    out.push_back(deep_positive(options));
    for (auto& r : k_invariance(options)) {
        out.push_back(std::move(r));
    }
    out.push_back(endpoint(options));
    for (auto& r : penalty(options)) {
        out.push_back(std::move(r));
    }
    out.push_back(no_generator_gradient(options));
    return out;
}

}  // namespace mafgan

#include "mafgan/verify.hpp"

#include "mafgan/constraints.hpp"
#include "mafgan/data.hpp"
#include "mafgan/gradcheck.hpp"
#include "mafgan/io.hpp"
#include "mafgan/networks.hpp"
#include "mafgan/objectives.hpp"
#include "mafgan/rng.hpp"
#include "mafgan/trainer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mafgan {

namespace {

using ad::Matrix;
using ad::NamedTensor;

constexpr double kFdStep = 1e-3;
constexpr double kFdTol = 1e-4;

struct Accumulated {
    double worst = 0.0;
    std::string worst_at;
    std::size_t draws = 0;
    std::size_t checked = 0;
    std::size_t excluded = 0;

    void add(const ad::FiniteDiffReport& r) {
        for (const auto& p : r.params) {
            if (p.max_rel_error > worst) {
                worst = p.max_rel_error;
                worst_at = "draw " + std::to_string(draws) + " " + p.name;
            }
        }
        ++draws;
        checked += r.checked();
        excluded += r.excluded();
    }

    CheckResult result(const std::string& name, std::size_t networks) const {
        return {"fd_" + name, kFdTol, worst, worst < kFdTol && checked > 0,
                std::to_string(networks) + " draws, " + std::to_string(checked) + " elements checked, " +
                    std::to_string(excluded) + " at kinks, worst at " + worst_at};
    }
};

std::vector<NamedTensor> with_pivot(std::vector<NamedTensor> params, const Objective& obj) {
    for (const auto& t : obj.auxiliary_parameters()) {
        params.push_back({"pivot.weight", t});
    }
    return params;
}

Matrix sqrtm_sym(const Eigen::Matrix2d& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (m + m.transpose()));
    const Eigen::Vector2d roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<CheckResult> finite_difference_suite(std::uint64_t seed, std::size_t networks) {
    std::vector<CheckResult> out;
    Rng rng(seed, "verify.fd");

    {
        Accumulated acc;
        for (std::size_t i = 0; i < networks; ++i) {
            const ad::AffineMap l1{Tensor::parameter(rng.normal_matrix(3, 6)), Tensor::parameter(rng.normal_matrix(1, 6))};
            const ad::AffineMap l2{Tensor::parameter(rng.normal_matrix(6, 2)), Tensor::parameter(rng.normal_matrix(1, 2))};
            const Tensor x = Tensor::constant(rng.normal_matrix(5, 3));
            auto fn = [&] { return ad::mean(ad::square(ad::affine(ad::relu(ad::affine(x, l1)), l2))); };
            acc.add(ad::finite_diff_check(fn, {{"l1.w", l1.weight}, {"l1.b", l1.bias}, {"l2.w", l2.weight}, {"l2.b", l2.bias}},
                                          kFdStep, kFdTol, ad::DiffScheme::ridders));
        }
        out.push_back(acc.result("relu_mlp", networks));
    }
    {
        Accumulated acc;
        for (std::size_t i = 0; i < networks; ++i) {
            const Tensor a = Tensor::parameter(rng.uniform_matrix(4, 3, 0.5, 2.0));
            const Tensor b = Tensor::parameter(rng.normal_matrix(4, 3));
            auto fn = [&] {
                const Tensor s = ad::sigmoid(b) + ad::softplus(b) * ad::exp(ad::scale(b, 0.3));
                return ad::mean(ad::log(a) * s + ad::sqrt(a) / (ad::square(b) + 1.0) + ad::sum_rows(a * b) * 0.1);
            };
            acc.add(ad::finite_diff_check(fn, {{"a", a}, {"b", b}}, kFdStep, kFdTol, ad::DiffScheme::ridders));
        }
        out.push_back(acc.result("elementwise", networks));
    }
    {
        Accumulated acc;
        for (std::size_t i = 0; i < networks; ++i) {
            nn::Discriminator d({2, 6, 2, 3});
            nn::init_params(d, rng);
            const Tensor x = Tensor::constant(rng.normal_matrix(5, 2, 2.0));
            auto fn = [&] { return ad::mean(ad::square(d.forward(x))); };
            acc.add(ad::finite_diff_check(fn, d.parameters(), kFdStep, kFdTol, ad::DiffScheme::ridders));
        }
        out.push_back(acc.result("maxout_discriminator", networks));
    }
    {
        Accumulated acc;
        for (std::size_t i = 0; i < networks; ++i) {
            nn::Generator g({4, 6, 2, 2});
            nn::init_params(g, rng);
            for (auto& p : g.parameters()) {
                p.tensor.mutable_value() += rng.normal_matrix(p.tensor.rows(), p.tensor.cols(), 0.1);
            }
            const Tensor z = Tensor::constant(rng.normal_matrix(8, 4));
            auto fn = [&] { return ad::mean(ad::square(g.forward(z, ad::Mode::train))); };
            acc.add(ad::finite_diff_check(fn, g.parameters(), kFdStep, kFdTol, ad::DiffScheme::ridders));
        }
        out.push_back(acc.result("batchnorm_generator", networks));
    }
    for (ObjectiveKind kind :
         {ObjectiveKind::std_gan, ObjectiveKind::wgan, ObjectiveKind::maf_c, ObjectiveKind::maf_d, ObjectiveKind::maf_e}) {
        Accumulated acc;
        const ObjectiveSpec spec{kind, true};
        const std::size_t m = spec.requires_scalar_embedding() ? 1 : 3;
        for (std::size_t i = 0; i < networks; ++i) {
            nn::Discriminator d({2, 6, 2, m});
            nn::init_params(d, rng);
            Objective obj(spec, m);
            const Tensor xr = Tensor::constant(rng.normal_matrix(5, 2, 2.0));
            const Tensor xg = Tensor::constant(rng.normal_matrix(7, 2, 2.0));
            if (obj.has_pivot()) {
                obj.pivot().weight().mutable_value() = rng.normal_matrix(1, m);
            }
            auto fn = [&] {
                const Losses l = obj.losses(d.forward(xr), d.forward(xg));
                return l.d_loss + l.g_loss * 0.37;
            };
            acc.add(ad::finite_diff_check(fn, with_pivot(d.parameters(), obj), kFdStep, kFdTol, ad::DiffScheme::ridders));
        }
        out.push_back(acc.result("objective_" + std::string(to_string(kind)), networks));
    }
    for (TcMetric metric : {TcMetric::mse, TcMetric::l1, TcMetric::cosine}) {
        Accumulated acc;
        for (std::size_t i = 0; i < networks; ++i) {
            nn::Discriminator d({2, 6, 2, 3});
            nn::init_params(d, rng);
            const Tensor xr = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
            const Tensor xg = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
            const auto eps = sample_mix_coefficients(rng, 6);
            const EmbedFn embed = [&d](const Tensor& x) { return d.forward(x); };
            auto fn = [&] { return topological_consistency(embed, xr, xg, eps, {}, {metric}); };
            acc.add(ad::finite_diff_check(fn, d.parameters(), kFdStep, kFdTol, ad::DiffScheme::ridders));
        }
        out.push_back(acc.result("tc_" + std::string(to_string(metric)), networks));
    }
    {
        Accumulated acc;
        for (std::size_t i = 0; i < networks; ++i) {
            nn::Discriminator d({2, 6, 2, 1});
            nn::init_params(d, rng);
            const Tensor xr = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
            const Tensor xg = Tensor::constant(rng.normal_matrix(6, 2, 2.0));
            const auto eps = sample_mix_coefficients(rng, 6);
            const EmbedFn realness = [&d](const Tensor& x) { return d.forward(x); };
            auto fn = [&] { return gradient_penalty(realness, xr, xg, eps); };
            acc.add(ad::finite_diff_check(fn, d.parameters(), kFdStep, kFdTol, ad::DiffScheme::ridders));
        }
        out.push_back(acc.result("gradient_penalty", networks));
    }
    return out;
}

double frechet_distance_eig(const Gaussian2& a, const Gaussian2& b) {
    const Eigen::Matrix2d ra = sqrtm_sym(a.cov);
    const Eigen::Matrix2d sa = ra * ra;
    const Eigen::Matrix2d rb = sqrtm_sym(b.cov);
    const Eigen::Matrix2d sb = rb * rb;
    const Eigen::Matrix2d inner = ra * sb * ra;
    const double cross = sqrtm_sym(inner).trace();
    return std::max(0.0, (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross);
}

std::vector<CheckResult> metric_oracle_suite(std::uint64_t seed) {
    std::vector<CheckResult> out;
    Rng rng(seed, "verify.metrics");

    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        auto random_gaussian = [&rng] {
            Gaussian2 g;
            g.mean = Eigen::Vector2d(rng.normal(0.0, 2.0), rng.normal(0.0, 2.0));
            Eigen::Matrix2d l;
            l << rng.normal(), 0.0, rng.normal(), rng.normal();
            g.cov = l * l.transpose();
            return g;
        };
        const Gaussian2 a = random_gaussian();
        const Gaussian2 b = random_gaussian();
        worst = std::max(worst, std::abs(frechet_distance(a, b) - frechet_distance_eig(a, b)));
    }
    out.push_back({"frechet_eig_oracle", 1e-8, worst, worst <= 1e-8, "100 random Gaussian pairs"});

    {
        const std::size_t n = 100000;
        const Matrix a = rng.normal_matrix(n, 2);
        Matrix b = rng.normal_matrix(n, 2);
        b.col(0).array() += 1.0;
        const double fd = frechet_distance_2d(a, b);
        const double sym = std::abs(fd - frechet_distance_2d(b, a));
        out.push_back({"frechet_unit_shift", 0.05, std::abs(fd - 1.0), std::abs(fd - 1.0) <= 0.05,
                       "value " + format_double(fd) + ", n = 100000"});
        out.push_back({"frechet_symmetry", 1e-12, sym, sym <= 1e-12, ""});
    }
    {
        const std::size_t n = 90000;
        SyntheticSpec spec;
        const Matrix pts = sample_synthetic(spec, seed, n);
        const ModeCoverage cov = mode_coverage(pts, grid_centers(spec), 3.0 * spec.mode_std);
        double dev = 0.0;
        for (auto c : cov.counts) {
            dev = std::max(dev, std::abs(static_cast<double>(c) / static_cast<double>(n) - 1.0 / 9.0));
        }
        const double tol = 3.0 / std::sqrt(static_cast<double>(n));
        out.push_back({"grid_mode_proportions", tol, dev, dev <= tol && cov.covered == 9, "n = 90000"});
    }
    {
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.epochs = 2;
        cfg.batch_size = 32;
        cfg.data.count = 256;
        cfg.generator = {8, 16, 2, 2};
        cfg.discriminator = {2, 16, 2, 4};
        cfg.metrics = {1, 64, 2, 32};
        auto once = [&cfg] {
            Trainer t(cfg);
            std::ostringstream os;
            t.train().write_csv(os, {});
            return os.str();
        };
        const bool same = once() == once();
        out.push_back({"rerun_identical_record", 0.0, same ? 0.0 : 1.0, same, "2-epoch toy run, same seed"});
    }
    return out;
}

std::vector<CheckResult> verify_all(const VerifyOptions& options) {
    TheoremOptions t;
    t.seed = options.seed;
    t.swap_embedding_order = options.mutate_tc_order;
    std::vector<CheckResult> out = theorem_suite(t);
    for (auto& c : finite_difference_suite(options.seed, options.fd_networks)) {
        out.push_back(std::move(c));
    }
    for (auto& c : metric_oracle_suite(options.seed)) {
        out.push_back(std::move(c));
    }
    return out;
}

void print_checks(std::ostream& os, const std::vector<CheckResult>& checks) {
    for (const auto& c : checks) {
        os << (c.passed ? "PASS " : "FAIL ") << c.name << " observed=" << format_double(c.observed)
           << " tolerance=" << format_double(c.tolerance);
        if (!c.detail.empty()) {
            os << "  (" << c.detail << ")";
        }
        os << '\n';
    }
}

}  // namespace mafgan

#include "mafgan/autodiff.hpp"
#include "mafgan/gradcheck.hpp"
#include "mafgan/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mafgan;
using namespace mafgan::ad;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) { return Tensor::from_rows(rows).value(); }

ad::AffineMap affine_1d(double w, double b) {
    return {Tensor::parameter(mat({{w}})), Tensor::parameter(mat({{b}}))};
}

}  // namespace

TEST(Matmul, IdentityAndHandArithmetic) {
    const Tensor id = Tensor::from_rows({{1, 0}, {0, 1}});
    const Tensor col = Tensor::from_rows({{3}, {4}});
    EXPECT_EQ(matmul(id, col).value(), mat({{3}, {4}}));
    EXPECT_DOUBLE_EQ(matmul(Tensor::from_rows({{1, 2}}), col).item(), 11.0);
}

TEST(Matmul, BackwardOfSumIsOtherFactor) {
    const Tensor a = Tensor::parameter(mat({{1, 2}}));
    const Tensor b = Tensor::constant(mat({{3}, {4}}));
    backward(sum(matmul(a, b)));
    EXPECT_EQ(a.grad().value(), mat({{3, 4}}));
}

TEST(Matmul, GradientsMatchClosedForm) {
    Rng rng(3, "test");
    const Tensor a = Tensor::parameter(rng.normal_matrix(4, 3));
    const Tensor b = Tensor::parameter(rng.normal_matrix(3, 5));
    const Matrix w = rng.normal_matrix(4, 5);
    backward(sum(mask_mul(matmul(a, b), w)));
    EXPECT_LT((a.grad().value() - w * b.value().transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((b.grad().value() - a.value().transpose() * w).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        (void)matmul(Tensor::zeros(2, 3), Tensor::zeros(2, 3));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    }
}

TEST(Relu, ForwardAndSubgradient) {
    const Tensor x = Tensor::parameter(mat({{-1, 2}}));
    const Tensor y = relu(x);
    EXPECT_EQ(y.value(), mat({{0, 2}}));
    backward(sum(y));
    EXPECT_EQ(x.grad().value(), mat({{0, 1}}));

    const Tensor z = Tensor::parameter(mat({{0}}));
    const Tensor r = relu(z);
    EXPECT_EQ(r.item(), 0.0);
    backward(sum(r));
    EXPECT_EQ(z.grad().item(), 0.0);
}

TEST(LinearMaxout, AbsoluteValueFromTwoPieces) {
    const std::vector<AffineMap> pieces{affine_1d(1, 0), affine_1d(-1, 0)};
    EXPECT_DOUBLE_EQ(linear_maxout(Tensor::from_rows({{3}}), pieces).item(), 3.0);
    EXPECT_DOUBLE_EQ(linear_maxout(Tensor::from_rows({{-2}}), pieces).item(), 2.0);
}

TEST(LinearMaxout, GradientRoutesToArgmaxPiece) {
    const std::vector<AffineMap> pieces{affine_1d(1, 0), affine_1d(-1, 0)};
    const Tensor x = Tensor::parameter(mat({{3}}));
    backward(sum(linear_maxout(x, pieces)));
    EXPECT_DOUBLE_EQ(x.grad().item(), 1.0);
    EXPECT_DOUBLE_EQ(pieces[0].weight.grad().item(), 3.0);
    EXPECT_FALSE(pieces[1].weight.has_grad() && pieces[1].weight.grad().item() != 0.0);
}

TEST(LinearMaxout, TieGoesToLowestPiece) {
    const std::vector<AffineMap> pieces{affine_1d(1, 0), affine_1d(-1, 0)};
    const Tensor x = Tensor::parameter(mat({{0}}));
    backward(sum(linear_maxout(x, pieces)));
    EXPECT_DOUBLE_EQ(x.grad().item(), 1.0);
}

TEST(LinearMaxout, OnePieceIsConfigurationError) {
    const std::vector<AffineMap> pieces{affine_1d(1, 0)};
    EXPECT_THROW((void)linear_maxout(Tensor::from_rows({{1}}), pieces), ConfigurationError);
}

TEST(BatchNorm, ZeroMeanUnitVarianceBatchIsPreserved) {
    BatchNormStats stats;
    const Tensor y = batch_norm(Tensor::from_rows({{1}, {-1}}), Tensor::from_rows({{1}}), Tensor::from_rows({{0}}),
                                stats, Mode::train);
    const double expect = 1.0 / std::sqrt(1.0 + stats.eps);
    EXPECT_NEAR(y.at(0, 0), expect, 1e-15);
    EXPECT_NEAR(y.at(1, 0), -expect, 1e-15);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
    BatchNormStats stats;
    Rng rng(1, "test");
    const Tensor y = batch_norm(Tensor::constant(rng.normal_matrix(6, 3)), Tensor::zeros(1, 3),
                                Tensor::from_rows({{0.5, -1, 2}}), stats, Mode::train);
    for (std::size_t r = 0; r < 6; ++r) {
        EXPECT_EQ(y.at(r, 0), 0.5);
        EXPECT_EQ(y.at(r, 1), -1.0);
        EXPECT_EQ(y.at(r, 2), 2.0);
    }
}

TEST(BatchNorm, ConstantBatchGivesBeta) {
    BatchNormStats stats;
    const Tensor y = batch_norm(Tensor::from_rows({{5}, {5}}), Tensor::from_rows({{1}}), Tensor::from_rows({{0.25}}),
                                stats, Mode::train);
    EXPECT_DOUBLE_EQ(y.at(0, 0), 0.25);
    EXPECT_DOUBLE_EQ(y.at(1, 0), 0.25);
}

TEST(BatchNorm, SingleRowInTrainModeIsRejected) {
    BatchNormStats stats;
    EXPECT_THROW((void)batch_norm(Tensor::from_rows({{1}}), Tensor::from_rows({{1}}), Tensor::from_rows({{0}}), stats,
                                  Mode::train),
                 DimensionError);
    EXPECT_NO_THROW((void)batch_norm(Tensor::from_rows({{1}}), Tensor::from_rows({{1}}), Tensor::from_rows({{0}}),
                                     stats, Mode::eval));
}

TEST(BatchNorm, TrainOutputMomentsOverRandomBatches) {
    Rng rng(11, "test");
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t b = 16 + rng.index(48);
        const std::size_t p = 1 + rng.index(5);
        BatchNormStats stats;
        const Matrix gamma = rng.normal_matrix(1, p);
        const Matrix beta = rng.normal_matrix(1, p, 3.0);
        const Tensor x = Tensor::constant((rng.normal_matrix(b, p, 4.0).array() + 7.0).matrix());
        const Matrix y = batch_norm(x, Tensor::constant(gamma), Tensor::constant(beta), stats, Mode::train).value();
        for (std::size_t j = 0; j < p; ++j) {
            const double mu = y.col(j).mean() - beta(0, j);
            const double var = (y.col(j).array() - y.col(j).mean()).square().mean();
            EXPECT_LT(std::abs(mu), 1e-6 * (1.0 + std::abs(beta(0, j))));
            EXPECT_NEAR(var, gamma(0, j) * gamma(0, j), 1e-3);
        }
    }
}

TEST(BatchNorm, RunningStatisticsFollowMomentum) {
    BatchNormStats stats;
    (void)batch_norm(Tensor::from_rows({{1}, {3}}), Tensor::from_rows({{1}}), Tensor::from_rows({{0}}), stats,
                     Mode::train);
    EXPECT_NEAR(stats.running_mean(0, 0), 0.1 * 2.0, 1e-15);
    EXPECT_NEAR(stats.running_var(0, 0), 0.9 + 0.1 * 2.0, 1e-15);

    const Tensor y = batch_norm(Tensor::from_rows({{0.2}}), Tensor::from_rows({{1}}), Tensor::from_rows({{0}}), stats,
                                Mode::eval);
    EXPECT_NEAR(y.item(), 0.0, 1e-15);
}

TEST(BatchNorm, RefusesSecondDerivative) {
    BatchNormStats stats;
    const Tensor x = Tensor::parameter(mat({{1}, {2}, {4}}));
    const Tensor y = sum(square(batch_norm(x, Tensor::from_rows({{1}}), Tensor::from_rows({{0}}), stats, Mode::train)));
    const std::vector<Tensor> in{x};
    EXPECT_THROW((void)gradients(y, in, true), UnsupportedOpError);
    EXPECT_NO_THROW((void)gradients(y, in, false));
}

TEST(Backward, SquareAtThree) {
    const Tensor x = Tensor::parameter(mat({{3}}));
    backward(square(x));
    EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Backward, FanOutAccumulates) {
    const Tensor x = Tensor::parameter(mat({{1}}));
    backward(x + x);
    EXPECT_DOUBLE_EQ(x.grad().item(), 2.0);
}

TEST(Backward, FanOutIsAdditiveOnRandomGraphs) {
    Rng rng(5, "test");
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix v = rng.normal_matrix(3, 4);
        const Tensor a = Tensor::parameter(v);
        const Tensor b = Tensor::parameter(v);
        auto f = [](const Tensor& t) { return sum(sigmoid(t) * exp(scale(t, 0.2)) + square(t)); };
        backward(f(a));
        backward(f(b) + f(b));
        EXPECT_LT((b.grad().value() - 2.0 * a.grad().value()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Backward, SecondCallDoublesGrads) {
    Rng rng(8, "test");
    Tensor w = Tensor::parameter(rng.normal_matrix(3, 2));
    const Tensor x = Tensor::constant(rng.normal_matrix(4, 3));
    const Tensor loss = mean(square(relu(matmul(x, w))));
    backward(loss);
    const Matrix once = w.grad().value();
    backward(loss);
    EXPECT_LT((w.grad().value() - 2.0 * once).cwiseAbs().maxCoeff(), 1e-15);
    w.zero_grad();
    EXPECT_FALSE(w.has_grad());
}

TEST(Backward, NonScalarSeedIsContractError) {
    const Tensor x = Tensor::parameter(mat({{1, 2}}));
    EXPECT_THROW(backward(square(x)), ContractError);
}

TEST(Backward, BroadcastGradientSumsOverStretchedRows) {
    const Tensor x = Tensor::parameter(mat({{1, 2}, {3, 4}, {5, 6}}));
    const Tensor b = Tensor::parameter(mat({{10, 20}}));
    backward(sum(x + b));
    EXPECT_EQ(b.grad().value(), mat({{3, 3}}));
}

TEST(Backward, DoubleBackwardOfCube) {
    const Tensor x = Tensor::parameter(mat({{1.5}}));
    const std::vector<Tensor> in{x};
    const Tensor dy = gradients(x * x * x, in, true)[0];
    EXPECT_DOUBLE_EQ(dy.item(), 3.0 * 1.5 * 1.5);
    const Tensor d2y = gradients(dy, in, false)[0];
    EXPECT_DOUBLE_EQ(d2y.item(), 6.0 * 1.5);
}

TEST(Graph, TopologicalOrderPutsInputsFirst) {
    const Tensor a = Tensor::parameter(mat({{1, 2}}));
    const Tensor b = Tensor::parameter(mat({{3}, {4}}));
    const Tensor c = matmul(a, b);
    const Tensor d = square(c) + c;
    const Graph g = trace(d);
    EXPECT_LT(g.index_of(a), g.index_of(c));
    EXPECT_LT(g.index_of(b), g.index_of(c));
    EXPECT_LT(g.index_of(c), g.index_of(d));
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        for (const Tensor& in : g.nodes[i]->inputs) {
            EXPECT_LT(g.index_of(in), i);
        }
    }
}

TEST(Graph, NoGradGuardRecordsNothing) {
    const Tensor a = Tensor::parameter(mat({{1, 2}}));
    Tensor y;
    {
        NoGradGuard guard;
        y = square(a);
    }
    EXPECT_TRUE(y.is_leaf());
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(grad_mode_enabled());
}

TEST(Forward, DeterministicForIdenticalInputs) {
    Rng rng(2, "test");
    const Matrix v = rng.normal_matrix(5, 5);
    auto f = [&] { return (softplus(Tensor::constant(v)) * log(sigmoid(Tensor::constant(v)))).value(); };
    EXPECT_EQ(f(), f());
}

TEST(Forward, FiniteOnFiniteInputs) {
    const Tensor x = Tensor::from_rows({{-800, -30, 0, 30, 800}});
    EXPECT_TRUE(all_finite(sigmoid(x).value()));
    EXPECT_TRUE(all_finite(softplus(x).value()));
    EXPECT_DOUBLE_EQ(softplus(x).at(0, 4), 800.0);
}

TEST(FiniteDiff, SquareAtThree) {
    const Tensor x = Tensor::parameter(mat({{3}}));
    const auto report = finite_diff_check([&] { return square(x); }, {{"x", x}}, 1e-5, 1e-6);
    EXPECT_LT(report.max_rel_error(), 1e-6);
    EXPECT_EQ(report.checked(), 1u);
}

TEST(FiniteDiff, TwoLayerReluNet) {
    Rng rng(21, "test");
    for (int trial = 0; trial < 10; ++trial) {
        const AffineMap l1{Tensor::parameter(rng.normal_matrix(3, 8)), Tensor::parameter(rng.normal_matrix(1, 8))};
        const AffineMap l2{Tensor::parameter(rng.normal_matrix(8, 1)), Tensor::parameter(rng.normal_matrix(1, 1))};
        const Tensor x = Tensor::constant(rng.normal_matrix(6, 3));
        auto fn = [&] { return mean(square(affine(relu(affine(x, l1)), l2))); };
        const auto report = finite_diff_check(
            fn, {{"l1.w", l1.weight}, {"l1.b", l1.bias}, {"l2.w", l2.weight}, {"l2.b", l2.bias}}, 1e-5, 1e-4);
        EXPECT_LT(report.max_rel_error(), 1e-4);
    }
}

TEST(FiniteDiff, MaxoutTieIsExcluded) {
    std::vector<AffineMap> pieces{affine_1d(1, 0), affine_1d(-1, 0)};
    const Tensor x = Tensor::constant(mat({{2}}));
    // both pieces give 0 at x = 2 when the biases cancel the slopes
    pieces[0].bias.mutable_value()(0, 0) = -2.0;
    pieces[1].bias.mutable_value()(0, 0) = 2.0;
    auto fn = [&] { return sum(linear_maxout(x, pieces)); };
    const auto report = finite_diff_check(fn, {{"w0", pieces[0].weight}, {"b0", pieces[0].bias}}, 1e-5, 1e-4);
    EXPECT_EQ(report.excluded(), 2u);
    EXPECT_EQ(report.checked(), 0u);
}

TEST(FiniteDiff, NonFiniteOutputIsEvaluationError) {
    const Tensor x = Tensor::parameter(mat({{-1}}));
    EXPECT_THROW((void)finite_diff_check([&] { return sqrt(x); }, {{"x", x}}, 1e-5, 1e-4), EvaluationError);
}

TEST(FiniteDiff, RelativeErrorUsesFloor) {
    EXPECT_DOUBLE_EQ(relative_error(1e-12, 0.0), 1e-4);
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}

TEST(FiniteDiff, RiddersResolvesHighCurvature) {
    const Tensor x = Tensor::parameter(mat({{1e-3}}));
    auto fn = [&] { return sqrt(square(x) + 1e-8); };
    const auto central = finite_diff_check(fn, {{"x", x}}, 1e-3, 1e-4, DiffScheme::central);
    const auto extrapolated = finite_diff_check(fn, {{"x", x}}, 1e-3, 1e-4, DiffScheme::ridders);
    EXPECT_GT(central.max_rel_error(), 1e-2);
    EXPECT_LT(extrapolated.max_rel_error(), 1e-8);
}

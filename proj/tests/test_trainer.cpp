#include "mafgan/optim.hpp"
#include "mafgan/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mafgan;

namespace {

TrainConfig small_config(ObjectiveKind objective, ConstraintKind constraint, std::uint64_t seed = 0) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.objective.kind = objective;
    cfg.constraint.kind = constraint;
    cfg.generator = {8, 16, 2, 2};
    cfg.discriminator = {2, 16, 2, objective == ObjectiveKind::wgan || objective == ObjectiveKind::std_gan ? 1u : 4u};
    cfg.batch_size = 32;
    cfg.epochs = 4;
    cfg.lr = 1e-3;
    cfg.lr_decay_period = 2;
    cfg.data.count = 256;
    cfg.metrics = {2, 128, 4, 64};
    return cfg;
}

std::vector<double> values_of(const std::vector<ad::NamedTensor>& params) { return nn::flatten_params(params).values; }

std::string csv_of(const RunRecord& r) {
    std::ostringstream os;
    r.write_csv(os, {"test"});
    return os.str();
}

// Plain Adam written out element by element.
struct ReferenceAdam {
    double beta1, beta2, eps;
    std::vector<double> m, v;
    int t = 0;

    void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
        if (m.empty()) {
            m.assign(p.size(), 0.0);
            v.assign(p.size(), 0.0);
        }
        ++t;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1 * m[i] + (1 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(beta1, t));
            const double vh = v[i] / (1 - std::pow(beta2, t));
            p[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

}  // namespace

TEST(AdamStep, FirstStepMovesByLearningRate) {
    Matrix p = Matrix::Constant(2, 2, 0.5);
    const Matrix g = Matrix::Ones(2, 2);
    std::vector<AdamState> state(1);
    const StepOutcome out = adam_step({&p}, {&g}, state, 1, 1e-4, AdamConfig{});
    EXPECT_TRUE(out.applied);
    EXPECT_NEAR(p(0, 0) - 0.5, -1e-4, 1e-11);
}

TEST(AdamStep, ZeroGradientLeavesParameters) {
    Matrix p = Matrix::Constant(1, 3, 0.25);
    const Matrix g = Matrix::Zero(1, 3);
    std::vector<AdamState> state(1);
    for (int t = 1; t <= 10; ++t) {
        (void)adam_step({&p}, {&g}, state, t, 1e-2, AdamConfig{0.5, 0.999, 1e-8});
    }
    EXPECT_EQ(p, Matrix::Constant(1, 3, 0.25));
}

TEST(AdamStep, NonFiniteGradientRejectsWholeStep) {
    Matrix a = Matrix::Constant(1, 2, 1.0);
    Matrix b = Matrix::Constant(1, 2, 1.0);
    Matrix ga = Matrix::Ones(1, 2);
    Matrix gb = Matrix::Ones(1, 2);
    gb(0, 1) = std::nan("");
    std::vector<AdamState> state(2);
    const StepOutcome out = adam_step({&a, &b}, {&ga, &gb}, state, 1, 0.1, AdamConfig{});
    EXPECT_FALSE(out.applied);
    EXPECT_FALSE(out.diagnostic.empty());
    EXPECT_EQ(a, Matrix::Constant(1, 2, 1.0));
    EXPECT_EQ(state[0].m.size(), 0);
}

TEST(AdamStep, MatchesElementwiseReference) {
    Rng rng(1, "test");
    const AdamConfig cfg{0.5, 0.99, 1e-8};
    Matrix p = rng.normal_matrix(3, 4);
    std::vector<double> ref(p.data(), p.data() + p.size());
    ReferenceAdam oracle{cfg.beta1, cfg.beta2, cfg.eps, {}, {}, 0};
    std::vector<AdamState> state(1);
    for (int t = 1; t <= 25; ++t) {
        const Matrix g = rng.normal_matrix(3, 4);
        (void)adam_step({&p}, {&g}, state, t, 0.01, cfg);
        oracle.step(ref, std::vector<double>(g.data(), g.data() + g.size()), 0.01);
    }
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        EXPECT_NEAR(p.data()[i], ref[static_cast<std::size_t>(i)], 1e-14);
    }
}

TEST(AdamStep, IdenticalRunsIdenticalTrajectories) {
    auto run = [] {
        Rng rng(2, "test");
        Matrix p = rng.normal_matrix(2, 2);
        std::vector<AdamState> state(1);
        for (int t = 1; t <= 50; ++t) {
            const Matrix g = rng.normal_matrix(2, 2);
            (void)adam_step({&p}, {&g}, state, t, 1e-3, AdamConfig{});
        }
        return p;
    };
    EXPECT_EQ(run(), run());
}

TEST(TrainConfig, LearningRateSchedule) {
    TrainConfig cfg;
    EXPECT_DOUBLE_EQ(cfg.lr_at(0), 1e-4);
    EXPECT_DOUBLE_EQ(cfg.lr_at(49), 1e-4);
    EXPECT_DOUBLE_EQ(cfg.lr_at(50), 1e-4 * 0.9);
    EXPECT_DOUBLE_EQ(cfg.lr_at(499), 1e-4 * std::pow(0.9, 9));
}

TEST(TrainConfig, ViolationsListEveryField) {
    TrainConfig cfg;
    EXPECT_TRUE(cfg.violations().empty());
    cfg.n_critic = 0;
    cfg.lr = -1.0;
    cfg.adam.beta1 = 1.0;
    cfg.adam.beta2 = -0.1;
    const auto v = cfg.violations();
    EXPECT_EQ(v.size(), 4u);
    EXPECT_THROW(Trainer{cfg}, ad::ConfigurationError);

    TrainConfig wide;
    wide.objective.kind = ObjectiveKind::wgan;
    EXPECT_FALSE(wide.violations().empty());
}

TEST(CriticStep, NoConstraintIsPlainAscent) {
    Trainer t(small_config(ObjectiveKind::wgan, ConstraintKind::none));
    const Matrix batch = t.dataset().topRows(32);
    const StepResult r = t.critic_step(batch, 1e-3);
    EXPECT_TRUE(r.applied);
    EXPECT_FALSE(r.tc);
    EXPECT_FALSE(r.gp);
    EXPECT_DOUBLE_EQ(r.d_loss, -r.gap);
}

TEST(CriticStep, ClipLeavesParametersInBox) {
    TrainConfig cfg = small_config(ObjectiveKind::wgan, ConstraintKind::clip);
    cfg.constraint.clip = 0.02;
    Trainer t(cfg);
    for (int i = 0; i < 5; ++i) {
        ASSERT_TRUE(t.critic_step(t.dataset().topRows(32), 1e-2).applied);
        for (double v : nn::flatten_params(t.discriminator()).values) {
            EXPECT_LE(std::abs(v), 0.02);
        }
    }
}

TEST(CriticStep, TcAndGpReportFiniteValues) {
    Trainer tc(small_config(ObjectiveKind::maf_e, ConstraintKind::tc));
    Trainer gp(small_config(ObjectiveKind::wgan, ConstraintKind::gp));
    for (int i = 0; i < 5; ++i) {
        const StepResult a = tc.critic_step(tc.dataset().topRows(32), 1e-3);
        ASSERT_TRUE(a.applied);
        ASSERT_TRUE(a.tc);
        EXPECT_TRUE(std::isfinite(*a.tc));
        const StepResult b = gp.critic_step(gp.dataset().topRows(32), 1e-3);
        ASSERT_TRUE(b.applied);
        ASSERT_TRUE(b.gp);
        EXPECT_TRUE(std::isfinite(*b.gp));
    }
}

TEST(CriticStep, KScaleMultipliesAdversarialLoss) {
    TrainConfig one = small_config(ObjectiveKind::maf_e, ConstraintKind::none);
    TrainConfig five = one;
    five.constraint.k_scale = 5.0;
    Trainer a(one);
    Trainer b(five);
    const StepResult ra = a.critic_step(a.dataset().topRows(32), 1e-3);
    const StepResult rb = b.critic_step(b.dataset().topRows(32), 1e-3);
    EXPECT_NEAR(rb.d_loss, 5.0 * ra.d_loss, 1e-12 * std::abs(rb.d_loss));
    EXPECT_DOUBLE_EQ(ra.gap, rb.gap);
}

TEST(CriticStep, NeverTouchesGeneratorParameters) {
    for (ConstraintKind c : {ConstraintKind::none, ConstraintKind::clip, ConstraintKind::tc}) {
        Trainer t(small_config(ObjectiveKind::maf_c, c));
        const auto before = values_of(t.generator().parameters());
        for (int i = 0; i < 3; ++i) {
            (void)t.critic_step(t.dataset().topRows(32), 1e-2);
        }
        EXPECT_EQ(values_of(t.generator().parameters()), before);
        for (const auto& p : t.generator().parameters()) {
            EXPECT_FALSE(p.tensor.has_grad()) << p.name;
        }
    }
}

TEST(GeneratorStep, NeverTouchesCriticOrPivot) {
    Trainer t(small_config(ObjectiveKind::maf_c, ConstraintKind::tc));
    (void)t.critic_step(t.dataset().topRows(32), 1e-3);
    const auto d_before = values_of(t.discriminator().parameters());
    const Matrix w_before = t.objective().pivot().weight().value();
    const auto g_before = values_of(t.generator().parameters());
    for (int i = 0; i < 3; ++i) {
        const StepResult r = t.generator_step(1e-2);
        ASSERT_TRUE(r.applied);
        EXPECT_TRUE(std::isfinite(r.g_loss));
    }
    EXPECT_EQ(values_of(t.discriminator().parameters()), d_before);
    EXPECT_EQ(t.objective().pivot().weight().value(), w_before);
    EXPECT_NE(values_of(t.generator().parameters()), g_before);
    for (const auto& p : t.discriminator().parameters()) {
        EXPECT_FALSE(p.tensor.has_grad()) << p.name;
        EXPECT_TRUE(p.tensor.requires_grad());
    }
}

TEST(GeneratorStep, ZeroInitializedGeneratorChangesOnlyItself) {
    Trainer t(small_config(ObjectiveKind::wgan, ConstraintKind::none));
    nn::init_params(t.generator(), 0, nn::InitScheme::zeros);
    const auto d_before = values_of(t.discriminator().parameters());
    const auto g_before = values_of(t.generator().parameters());
    ASSERT_TRUE(t.generator_step(1e-2).applied);
    EXPECT_EQ(values_of(t.discriminator().parameters()), d_before);
    EXPECT_NE(values_of(t.generator().parameters()), g_before);
}

TEST(Train, AlternatesCriticAndGenerator) {
    TrainConfig cfg = small_config(ObjectiveKind::maf_e, ConstraintKind::tc);
    cfg.n_critic = 3;
    Trainer t(cfg);
    const RunRecord r = t.train();
    ASSERT_TRUE(r.complete) << r.failure;
    std::size_t since_generator = 0;
    std::size_t generators = 0;
    std::size_t critics = 0;
    for (const auto& row : r.rows) {
        if (row.phase == Phase::critic) {
            ++since_generator;
            ++critics;
        } else if (row.phase == Phase::generator) {
            EXPECT_EQ(since_generator, 3u);
            since_generator = 0;
            ++generators;
        }
    }
    EXPECT_EQ(critics, t.batches_per_epoch() * cfg.epochs);
    EXPECT_EQ(generators, critics / 3);
    EXPECT_EQ(r.updates, critics + generators);
}

TEST(Train, RecordFollowsLearningRateSchedule) {
    TrainConfig cfg = small_config(ObjectiveKind::wgan, ConstraintKind::gp);
    Trainer t(cfg);
    const RunRecord r = t.train();
    ASSERT_TRUE(r.complete) << r.failure;
    std::size_t last_step = 0;
    for (const auto& row : r.rows) {
        EXPECT_DOUBLE_EQ(row.lr, cfg.lr_at(row.epoch));
        if (row.phase != Phase::snapshot) {
            EXPECT_EQ(row.step, last_step + 1);
            last_step = row.step;
            EXPECT_FALSE(row.skipped);
            if (row.phase == Phase::critic) {
                EXPECT_TRUE(row.d_loss && std::isfinite(*row.d_loss));
            } else {
                EXPECT_TRUE(row.g_loss && std::isfinite(*row.g_loss));
            }
        }
    }
}

TEST(Train, SnapshotsAtIntervalAndEnd) {
    TrainConfig cfg = small_config(ObjectiveKind::maf_d, ConstraintKind::tc);
    cfg.epochs = 5;
    cfg.metrics.interval = 2;
    Trainer t(cfg);
    std::vector<std::size_t> callbacks;
    const RunRecord r = t.train([&](std::size_t e, Trainer&) { callbacks.push_back(e); });
    std::vector<std::size_t> epochs;
    for (const auto* s : r.snapshots()) {
        epochs.push_back(s->epoch);
        EXPECT_TRUE(s->frechet);
        EXPECT_TRUE(s->modes);
        EXPECT_TRUE(s->probe_mean);
        EXPECT_GE(*s->probe_var, 0.0);
    }
    EXPECT_EQ(epochs, (std::vector<std::size_t>{0, 2, 4, 5}));
    EXPECT_EQ(callbacks, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Train, SeedFixedRerunIsByteIdentical) {
    for (ObjectiveKind k : {ObjectiveKind::maf_c, ObjectiveKind::std_gan}) {
        const ConstraintKind c = k == ObjectiveKind::std_gan ? ConstraintKind::none : ConstraintKind::tc;
        Trainer a(small_config(k, c, 9));
        Trainer b(small_config(k, c, 9));
        const std::string first = csv_of(a.train());
        EXPECT_EQ(first, csv_of(b.train()));
        Trainer other(small_config(k, c, 10));
        EXPECT_NE(first, csv_of(other.train()));
    }
}

TEST(Train, ZeroEpochsKeepsInitializedNetworks) {
    TrainConfig cfg = small_config(ObjectiveKind::maf_e, ConstraintKind::tc);
    cfg.epochs = 0;
    Trainer t(cfg);
    nn::Generator g(cfg.generator);
    nn::init_params(g, cfg.seed);
    const RunRecord r = t.train();
    EXPECT_TRUE(r.complete);
    EXPECT_TRUE(r.rows.empty());
    EXPECT_EQ(r.updates, 0u);
    EXPECT_EQ(values_of(t.generator().parameters()), values_of(g.parameters()));
}

TEST(Train, DivergenceAbortsWithPartialRecord) {
    TrainConfig cfg = small_config(ObjectiveKind::wgan, ConstraintKind::none);
    cfg.lr = 1e300;
    Trainer t(cfg);
    const RunRecord r = t.train();
    EXPECT_FALSE(r.complete);
    EXPECT_NE(r.failure.find("skipped"), std::string::npos) << r.failure;
    EXPECT_FALSE(r.rows.empty());
    EXPECT_GT(r.skipped, 0u);
}

TEST(Train, CsvHasHeaderAndOneLinePerRow) {
    Trainer t(small_config(ObjectiveKind::maf_e, ConstraintKind::tc));
    const RunRecord r = t.train();
    std::ostringstream os;
    r.write_csv(os, {"seed = 0", "recipe = x"});
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "# seed = 0");
    std::getline(is, line);
    std::getline(is, line);
    EXPECT_EQ(line, "step,epoch,phase,lr,skipped,d_loss,g_loss,gap,tc,gp,probe_mean,probe_var,frechet,modes");
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
    }
    EXPECT_EQ(n, r.rows.size());
}

TEST(Train, TcTrainingLowersTheProbe) {
    auto trained_probe = [](ConstraintKind constraint) {
        TrainConfig cfg = small_config(ObjectiveKind::maf_e, constraint, 3);
        cfg.data.count = 1024;
        cfg.batch_size = 64;
        cfg.epochs = 30;
        cfg.metrics = {30, 512, 4, 256};
        Trainer t(cfg);
        const RunRecord r = t.train();
        EXPECT_TRUE(r.complete) << r.failure;
        Rng rng(3, "test");
        const Tensor xr = Tensor::constant(t.dataset().topRows(256));
        const Tensor xg = Tensor::constant(rng.normal_matrix(256, 2, 2.0));
        Rng trials(3, "trials");
        return continuity_probe(t.discriminator(), xr, xg, cfg.constraint.probe_layer, 16, trials).mean;
    };
    EXPECT_LT(trained_probe(ConstraintKind::tc), trained_probe(ConstraintKind::none));
}

#pragma once

#include "mafgan/constraints.hpp"
#include "mafgan/data.hpp"
#include "mafgan/networks.hpp"
#include "mafgan/objectives.hpp"
#include "mafgan/optim.hpp"
#include "mafgan/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mafgan {

struct MetricSchedule {
    std::size_t interval = 50;  // epochs between snapshot rows
    std::size_t eval_samples = 2000;
    std::size_t probe_trials = 8;
    std::size_t probe_batch = 256;
};

struct TrainConfig {
    std::size_t n_critic = 3;
    std::size_t batch_size = 256;
    std::size_t epochs = 500;
    double lr = 1e-4;
    double lr_decay_factor = 0.9;
    std::size_t lr_decay_period = 50;  // epochs
    AdamConfig adam;
    std::uint64_t seed = 0;
    ObjectiveSpec objective;
    ConstraintSpec constraint;
    nn::GeneratorConfig generator;
    nn::DiscriminatorConfig discriminator{2, 128, 2, 16};
    SyntheticSpec data;
    MetricSchedule metrics;
    double max_skip_fraction = 0.01;

    [[nodiscard]] std::vector<std::string> violations() const;
    void validate() const;
    // lr0 * factor^floor(epoch / period)
    [[nodiscard]] double lr_at(std::size_t epoch) const;
};

enum class Phase { critic, generator, snapshot };

[[nodiscard]] std::string_view to_string(Phase phase);

struct RecordRow {
    std::size_t step = 0;  // critic + generator updates so far, this one included
    std::size_t epoch = 0;
    Phase phase = Phase::critic;
    double lr = 0.0;
    bool skipped = false;
    std::optional<double> d_loss;
    std::optional<double> g_loss;
    std::optional<double> gap;
    std::optional<double> tc;
    std::optional<double> gp;
    std::optional<double> probe_mean;
    std::optional<double> probe_var;
    std::optional<double> frechet;
    std::optional<std::size_t> modes;
};

struct PhaseTiming {
    double critic_seconds = 0.0;
    double generator_seconds = 0.0;
    double snapshot_seconds = 0.0;
    std::size_t critic_steps = 0;
    std::size_t generator_steps = 0;
};

struct RunRecord {
    std::vector<RecordRow> rows;
    std::size_t skipped = 0;
    std::size_t updates = 0;  // critic + generator steps attempted
    PhaseTiming timing;       // wall clock; kept out of the CSV
    bool complete = false;
    std::string failure;

    [[nodiscard]] std::vector<const RecordRow*> snapshots() const;
    // `header` lines are written first, each prefixed with "# ".
    void write_csv(std::ostream& os, const std::vector<std::string>& header) const;
};

struct StepResult {
    bool applied = false;
    std::string diagnostic;
    double d_loss = 0.0;
    double g_loss = 0.0;
    double gap = 0.0;
    std::optional<double> tc;
    std::optional<double> gp;
};

class Trainer {
public:
    // Samples the training set from the "data" stream of cfg.seed.
    explicit Trainer(TrainConfig cfg);
    Trainer(TrainConfig cfg, Matrix dataset);
    // Optimizers hold handles to the network parameters; a copy would alias them.
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;
    Trainer(Trainer&&) = default;

    // One critic update on `real_batch` against a fresh fake batch of the
    // same size. Adversarial loss is scaled by k_scale; the configured
    // constraint is added (tc, gp) or applied after the update (clip).
    StepResult critic_step(const Matrix& real_batch, double lr);
    // One generator update with the critic and its auxiliary state frozen.
    StepResult generator_step(double lr);

    // Called with the epoch count after epoch 0 (before training) and after
    // every completed epoch.
    using EpochCallback = std::function<void(std::size_t epoch, Trainer& trainer)>;
    RunRecord train(const EpochCallback& on_epoch = {});

    // Snapshot metrics with the current networks; appended as a row by train().
    RecordRow snapshot(std::size_t epoch);

    // Realness field of the current critic, [k x 2] -> [k x 1].
    [[nodiscard]] Tensor realness(const Tensor& x) const;
    // Eval-mode generator samples from the fixed evaluation noise.
    [[nodiscard]] Matrix evaluation_samples();

    [[nodiscard]] const TrainConfig& config() const { return cfg_; }
    [[nodiscard]] const Matrix& dataset() const { return data_; }
    [[nodiscard]] nn::Generator& generator() { return g_; }
    [[nodiscard]] nn::Discriminator& discriminator() { return d_; }
    [[nodiscard]] const nn::Discriminator& discriminator() const { return d_; }
    [[nodiscard]] Objective& objective() { return objective_; }
    [[nodiscard]] std::size_t batches_per_epoch() const;

    // Named tensors for checkpoints. The critic state includes the pivot.
    [[nodiscard]] std::vector<std::pair<std::string, Matrix*>> generator_state() { return g_.state(); }
    [[nodiscard]] std::vector<std::pair<std::string, Matrix*>> critic_state();
    // After restoring a checkpoint: keep the loaded pivot instead of
    // re-initializing it from the first real batch.
    void skip_pivot_warmup() { pivot_ready_ = true; }

private:
    Tensor critic_objective(const Tensor& x_real, const Tensor& x_fake, StepResult& out);

    TrainConfig cfg_;
    Matrix data_;
    nn::Generator g_;
    nn::Discriminator d_;
    Objective objective_;
    Adam adam_d_;
    Adam adam_g_;
    bool pivot_ready_ = false;

    Rng rng_z_;
    Rng rng_eps_;
    Rng rng_delta_;
    Rng rng_shuffle_;
    Rng rng_probe_;
    Matrix eval_z_;
};

}  // namespace mafgan

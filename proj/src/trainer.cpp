#include "mafgan/trainer.hpp"

#include "mafgan/io.hpp"
#include "mafgan/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace mafgan {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<Tensor> concat(std::vector<Tensor> a, const std::vector<Tensor>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

template <class T>
void put(std::ostream& os, const std::optional<T>& v) {
    if (v) {
        if constexpr (std::is_floating_point_v<T>) {
            os << format_double(*v);
        } else {
            os << *v;
        }
    }
}

}  // namespace

// ---- config -------------------------------------------------------------

std::vector<std::string> TrainConfig::violations() const {
    std::vector<std::string> out;
    if (n_critic < 1) {
        out.emplace_back("train.n_critic must be >= 1");
    }
    if (batch_size < 2) {
        out.emplace_back("train.batch_size must be >= 2");
    }
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        out.emplace_back("train.lr must be > 0");
    }
    if (!(lr_decay_factor > 0.0)) {
        out.emplace_back("train.lr_decay_factor must be > 0");
    }
    if (lr_decay_period < 1) {
        out.emplace_back("train.lr_decay_period must be >= 1");
    }
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) {
        out.emplace_back("train.beta1 must be in [0, 1)");
    }
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
        out.emplace_back("train.beta2 must be in [0, 1)");
    }
    if (!(adam.eps > 0.0)) {
        out.emplace_back("train.adam_eps must be > 0");
    }
    if (!(max_skip_fraction >= 0.0 && max_skip_fraction <= 1.0)) {
        out.emplace_back("train.max_skip_fraction must be in [0, 1]");
    }
    if (objective.requires_scalar_embedding() && discriminator.embed_dim != 1) {
        out.emplace_back("discriminator.embed_dim must be 1 for objective.kind = " +
                         std::string(to_string(objective.kind)));
    }
    if (discriminator.pieces < 2) {
        out.emplace_back("discriminator.pieces must be >= 2");
    }
    if (discriminator.hidden < 1 || discriminator.embed_dim < 1) {
        out.emplace_back("discriminator.hidden and discriminator.embed_dim must be >= 1");
    }
    if (generator.hidden < 1 || generator.depth < 1 || generator.z_dim < 1) {
        out.emplace_back("generator.hidden, generator.depth and generator.z_dim must be >= 1");
    }
    if (discriminator.in_dim != 2 || generator.out_dim != 2) {
        out.emplace_back("networks must map to and from 2-D data");
    }
    for (auto& v : constraint.violations()) {
        out.push_back(std::move(v));
    }
    for (auto& v : data.violations()) {
        out.push_back(std::move(v));
    }
    if (data.count < batch_size) {
        out.emplace_back("data.count must be >= train.batch_size");
    }
    if (metrics.interval < 1) {
        out.emplace_back("metrics.interval must be >= 1");
    }
    if (metrics.eval_samples < 3) {
        out.emplace_back("metrics.eval_samples must be >= 3");
    }
    if (metrics.probe_batch < 1 || metrics.probe_batch > metrics.eval_samples ||
        metrics.probe_batch > data.count) {
        out.emplace_back("metrics.probe_batch must be in [1, min(metrics.eval_samples, data.count)]");
    }
    if (metrics.eval_samples > data.count) {
        out.emplace_back("metrics.eval_samples must be <= data.count");
    }
    return out;
}

void TrainConfig::validate() const {
    const auto v = violations();
    if (!v.empty()) {
        std::string msg = "invalid training configuration:";
        for (const auto& s : v) {
            msg += "\n  " + s;
        }
        throw ad::ConfigurationError(msg);
    }
}

double TrainConfig::lr_at(std::size_t epoch) const {
    return lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_period));
}

std::string_view to_string(Phase phase) {
    switch (phase) {
        case Phase::critic: return "critic";
        case Phase::generator: return "generator";
        case Phase::snapshot: return "snapshot";
    }
    return "?";
}

// ---- record -------------------------------------------------------------

std::vector<const RecordRow*> RunRecord::snapshots() const {
    std::vector<const RecordRow*> out;
    for (const auto& r : rows) {
        if (r.phase == Phase::snapshot) {
            out.push_back(&r);
        }
    }
    return out;
}

void RunRecord::write_csv(std::ostream& os, const std::vector<std::string>& header) const {
    for (const auto& h : header) {
        os << "# " << h << '\n';
    }
    os << "step,epoch,phase,lr,skipped,d_loss,g_loss,gap,tc,gp,probe_mean,probe_var,frechet,modes\n";
    for (const auto& r : rows) {
        os << r.step << ',' << r.epoch << ',' << to_string(r.phase) << ',' << format_double(r.lr) << ','
           << (r.skipped ? 1 : 0) << ',';
        put(os, r.d_loss);
        os << ',';
        put(os, r.g_loss);
        os << ',';
        put(os, r.gap);
        os << ',';
        put(os, r.tc);
        os << ',';
        put(os, r.gp);
        os << ',';
        put(os, r.probe_mean);
        os << ',';
        put(os, r.probe_var);
        os << ',';
        put(os, r.frechet);
        os << ',';
        put(os, r.modes);
        os << '\n';
    }
}

// ---- trainer ------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg) : Trainer(cfg, sample_synthetic(cfg.data, cfg.seed, cfg.data.count)) {}

Trainer::Trainer(TrainConfig cfg, Matrix dataset)
    : cfg_(std::move(cfg)),
      data_(std::move(dataset)),
      g_((cfg_.validate(), cfg_.generator)),
      d_(cfg_.discriminator),
      objective_(cfg_.objective, cfg_.discriminator.embed_dim),
      adam_d_(concat(d_.parameter_tensors(), objective_.auxiliary_parameters()), cfg_.adam),
      adam_g_(g_.parameter_tensors(), cfg_.adam),
      rng_z_(cfg_.seed, "z"),
      rng_eps_(cfg_.seed, "eps"),
      rng_delta_(cfg_.seed, "delta"),
      rng_shuffle_(cfg_.seed, "shuffle"),
      rng_probe_(cfg_.seed, "probe") {
    if (data_.cols() != 2 || static_cast<std::size_t>(data_.rows()) < cfg_.batch_size) {
        throw ad::DimensionError("trainer: dataset must be [n x 2] with n >= batch_size, got " +
                                 std::to_string(data_.rows()) + "x" + std::to_string(data_.cols()));
    }
    nn::init_params(g_, cfg_.seed);
    nn::init_params(d_, cfg_.seed);
    Rng eval(cfg_.seed, "eval");
    eval_z_ = eval.normal_matrix(cfg_.metrics.eval_samples, cfg_.generator.z_dim);
}

std::size_t Trainer::batches_per_epoch() const { return static_cast<std::size_t>(data_.rows()) / cfg_.batch_size; }

std::vector<std::pair<std::string, Matrix*>> Trainer::critic_state() {
    auto state = d_.state();
    if (objective_.has_pivot()) {
        state.emplace_back("pivot.weight", &objective_.pivot().weight().mutable_value());
    }
    return state;
}

Tensor Trainer::realness(const Tensor& x) const { return objective_.realness(d_.forward(x)); }

Matrix Trainer::evaluation_samples() {
    ad::NoGradGuard no_grad;
    return g_.forward(Tensor::constant(eval_z_), ad::Mode::eval).value();
}

Tensor Trainer::critic_objective(const Tensor& x_real, const Tensor& x_fake, StepResult& out) {
    const Tensor v_real = d_.forward(x_real);
    const Tensor v_fake = d_.forward(x_fake);
    if (objective_.has_pivot()) {
        if (!pivot_ready_) {
            objective_.pivot().init_from(v_real.detach());
            pivot_ready_ = true;
        } else {
            objective_.pivot().ensure_valid(v_real.detach());
        }
    }
    const Losses losses = objective_.losses(v_real, v_fake);
    const double k = cfg_.constraint.k_scale;
    Tensor total = losses.d_loss * k;
    out.d_loss = total.item();
    out.gap = losses.gap.item();

    const std::size_t b = x_real.rows();
    const ConstraintSpec& c = cfg_.constraint;
    if (c.kind == ConstraintKind::tc) {
        const auto eps = sample_mix_coefficients(rng_eps_, b);
        std::vector<double> delta;
        if (c.delta_std > 0.0) {
            delta.resize(b);
            for (auto& d : delta) {
                d = rng_delta_.normal(0.0, c.delta_std);
            }
        }
        const EmbedFn embed = [this](const Tensor& x) { return d_.forward(x); };
        const Tensor tc = topological_consistency(embed, x_real, x_fake, v_real, v_fake, eps, delta, {c.tc_metric});
        out.tc = tc.item();
        total = total + tc * c.tc_weight;
    } else if (c.kind == ConstraintKind::gp) {
        const auto eps = sample_mix_coefficients(rng_eps_, b);
        const EmbedFn realness_fn = [this](const Tensor& x) { return realness(x); };
        const Tensor gp = gradient_penalty(realness_fn, x_real, x_fake, eps);
        out.gp = gp.item();
        total = total + gp * c.gp_weight;
    }
    return total;
}

StepResult Trainer::critic_step(const Matrix& real_batch, double lr) {
    StepResult out;
    Tensor x_fake;
    {
        ad::NoGradGuard no_grad;
        const Tensor z = Tensor::constant(rng_z_.normal_matrix(real_batch.rows(), cfg_.generator.z_dim));
        x_fake = g_.forward(z, ad::Mode::train);
    }
    const Tensor x_real = Tensor::constant(real_batch);

    adam_d_.zero_grad();
    Tensor total;
    try {
        total = critic_objective(x_real, x_fake, out);
    } catch (const NumericalError& e) {
        out.diagnostic = e.what();
        return out;
    }
    if (!std::isfinite(total.item())) {
        out.diagnostic = "non-finite critic loss";
        return out;
    }
    ad::backward(total);
    const StepOutcome step = adam_d_.step(lr);
    adam_d_.zero_grad();
    if (!step.applied) {
        out.diagnostic = step.diagnostic;
        return out;
    }
    if (cfg_.constraint.kind == ConstraintKind::clip) {
        weight_clip(d_.parameter_tensors(), cfg_.constraint.clip);
    }
    out.applied = true;
    return out;
}

StepResult Trainer::generator_step(double lr) {
    StepResult out;
    const ad::RequiresGradGuard freeze(concat(d_.parameter_tensors(), objective_.auxiliary_parameters()), false);
    const Tensor z = Tensor::constant(rng_z_.normal_matrix(cfg_.batch_size, cfg_.generator.z_dim));
    adam_g_.zero_grad();
    Tensor loss;
    try {
        const Tensor v_fake = d_.forward(g_.forward(z, ad::Mode::train));
        loss = objective_.generator_loss(v_fake) * cfg_.constraint.k_scale;
    } catch (const NumericalError& e) {
        out.diagnostic = e.what();
        return out;
    }
    out.g_loss = loss.item();
    if (!std::isfinite(out.g_loss)) {
        out.diagnostic = "non-finite generator loss";
        return out;
    }
    ad::backward(loss);
    const StepOutcome step = adam_g_.step(lr);
    adam_g_.zero_grad();
    if (!step.applied) {
        out.diagnostic = step.diagnostic;
        return out;
    }
    out.applied = true;
    return out;
}

RecordRow Trainer::snapshot(std::size_t epoch) {
    RecordRow row;
    row.epoch = epoch;
    row.phase = Phase::snapshot;
    row.lr = cfg_.lr_at(epoch);

    const Matrix samples = evaluation_samples();
    const std::size_t n_eval = cfg_.metrics.eval_samples;
    const Matrix reference = data_.topRows(static_cast<Eigen::Index>(n_eval));
    if (samples.allFinite()) {
        row.frechet = frechet_distance_2d(samples, reference);
        if (cfg_.data.kind == SyntheticKind::gaussian_grid) {
            row.modes = mode_coverage(samples, grid_centers(cfg_.data), 3.0 * cfg_.data.mode_std).covered;
        }
    }
    const std::size_t pb = cfg_.metrics.probe_batch;
    const Tensor xr = Tensor::constant(data_.topRows(static_cast<Eigen::Index>(pb)));
    const Tensor xg = Tensor::constant(samples.topRows(static_cast<Eigen::Index>(pb)));
    if (cfg_.metrics.probe_trials > 0 && samples.allFinite()) {
        const ProbeStats probe =
            continuity_probe(d_, xr, xg, cfg_.constraint.probe_layer, cfg_.metrics.probe_trials, rng_probe_);
        row.probe_mean = probe.mean;
        row.probe_var = probe.variance;
    }
    return row;
}

RunRecord Trainer::train(const EpochCallback& on_epoch) {
    RunRecord record;
    const std::size_t per_epoch = batches_per_epoch();
    const std::size_t planned_critic = per_epoch * cfg_.epochs;
    const std::size_t planned = planned_critic + planned_critic / cfg_.n_critic;
    const auto skip_budget = static_cast<std::size_t>(std::floor(cfg_.max_skip_fraction * static_cast<double>(planned)));

    auto take_snapshot = [&](std::size_t epoch) {
        const auto start = Clock::now();
        RecordRow row = snapshot(epoch);
        row.step = record.updates;
        record.rows.push_back(row);
        record.timing.snapshot_seconds += seconds_since(start);
    };

    try {
        if (cfg_.epochs > 0) {
            take_snapshot(0);
        }
        if (on_epoch) {
            on_epoch(0, *this);
        }
        std::vector<Eigen::Index> order(static_cast<std::size_t>(data_.rows()));
        std::size_t critic_count = 0;
        Matrix batch(cfg_.batch_size, 2);
        for (std::size_t epoch = 0; epoch < cfg_.epochs; ++epoch) {
            const double lr = cfg_.lr_at(epoch);
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            std::shuffle(order.begin(), order.end(), rng_shuffle_.engine());
            for (std::size_t b = 0; b < per_epoch; ++b) {
                for (std::size_t i = 0; i < cfg_.batch_size; ++i) {
                    batch.row(static_cast<Eigen::Index>(i)) = data_.row(order[b * cfg_.batch_size + i]);
                }
                auto start = Clock::now();
                const StepResult c = critic_step(batch, lr);
                record.timing.critic_seconds += seconds_since(start);
                ++record.timing.critic_steps;
                ++record.updates;
                ++critic_count;
                RecordRow row;
                row.step = record.updates;
                row.epoch = epoch;
                row.phase = Phase::critic;
                row.lr = lr;
                row.skipped = !c.applied;
                if (c.applied) {
                    row.d_loss = c.d_loss;
                    row.gap = c.gap;
                    row.tc = c.tc;
                    row.gp = c.gp;
                } else {
                    ++record.skipped;
                }
                record.rows.push_back(row);

                if (critic_count % cfg_.n_critic == 0) {
                    start = Clock::now();
                    const StepResult g = generator_step(lr);
                    record.timing.generator_seconds += seconds_since(start);
                    ++record.timing.generator_steps;
                    ++record.updates;
                    RecordRow grow;
                    grow.step = record.updates;
                    grow.epoch = epoch;
                    grow.phase = Phase::generator;
                    grow.lr = lr;
                    grow.skipped = !g.applied;
                    if (g.applied) {
                        grow.g_loss = g.g_loss;
                    } else {
                        ++record.skipped;
                    }
                    record.rows.push_back(grow);
                }
                if (record.skipped > skip_budget) {
                    throw NumericalError("skipped " + std::to_string(record.skipped) + " of " +
                                         std::to_string(planned) + " planned steps, over the " +
                                         format_double(cfg_.max_skip_fraction) + " limit");
                }
            }
            const std::size_t done = epoch + 1;
            if (done % cfg_.metrics.interval == 0 || done == cfg_.epochs) {
                take_snapshot(done);
            }
            if (on_epoch) {
                on_epoch(done, *this);
            }
        }
        record.complete = true;
    } catch (const std::exception& e) {
        record.complete = false;
        record.failure = e.what();
    }
    return record;
}

}  // namespace mafgan

#include "mafgan/experiment.hpp"

#include "mafgan/checkpoint.hpp"
#include "mafgan/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mafgan {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string seed_dir_name(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

json summarize(const ExperimentConfig& cfg, std::uint64_t seed, const RunRecord& record) {
    json j;
    j["recipe"] = cfg.recipe;
    j["seed"] = seed;
    j["complete"] = record.complete;
    j["failure"] = record.failure;
    j["skipped_steps"] = record.skipped;
    j["updates"] = record.updates;

    const auto snaps = record.snapshots();
    json series = json::array();
    std::optional<double> best;
    std::vector<double> probe_means;
    for (const RecordRow* r : snaps) {
        json s;
        s["epoch"] = r->epoch;
        s["frechet"] = optional_json(r->frechet);
        s["modes"] = r->modes ? json(*r->modes) : json(nullptr);
        s["probe_mean"] = optional_json(r->probe_mean);
        s["probe_var"] = optional_json(r->probe_var);
        series.push_back(s);
        if (r->frechet && (!best || *r->frechet < *best)) {
            best = r->frechet;
        }
        if (r->probe_mean) {
            probe_means.push_back(*r->probe_mean);
        }
    }
    j["snapshots"] = series;
    json final_metrics;
    if (!snaps.empty()) {
        const RecordRow* last = snaps.back();
        final_metrics["epoch"] = last->epoch;
        final_metrics["frechet"] = optional_json(last->frechet);
        final_metrics["modes"] = last->modes ? json(*last->modes) : json(nullptr);
        final_metrics["probe_mean"] = optional_json(last->probe_mean);
        final_metrics["probe_var"] = optional_json(last->probe_var);
    }
    j["final"] = final_metrics;
    j["best_frechet"] = optional_json(best);
    if (probe_means.size() >= 2) {
        double mean = 0.0;
        for (double v : probe_means) {
            mean += v;
        }
        mean /= static_cast<double>(probe_means.size());
        double var = 0.0;
        for (double v : probe_means) {
            var += (v - mean) * (v - mean);
        }
        j["probe_mean_variance"] = var / static_cast<double>(probe_means.size());
    } else {
        j["probe_mean_variance"] = nullptr;
    }
    return j;
}

json timing_json(const RunRecord& record) {
    const PhaseTiming& t = record.timing;
    json j;
    j["critic_seconds"] = t.critic_seconds;
    j["generator_seconds"] = t.generator_seconds;
    j["snapshot_seconds"] = t.snapshot_seconds;
    j["critic_steps"] = t.critic_steps;
    j["generator_steps"] = t.generator_steps;
    j["seconds_per_critic_step"] = t.critic_steps ? t.critic_seconds / static_cast<double>(t.critic_steps) : 0.0;
    return j;
}

void write_stream(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    std::ostringstream os;
    body(os);
    write_file(path, os.str());
}

}  // namespace

bool RunResult::all_complete() const {
    return std::all_of(seeds.begin(), seeds.end(), [](const SeedResult& s) { return s.record.complete; });
}

fs::path resolve_recipe(const std::string& name, const fs::path& recipes_dir) {
    const std::vector<fs::path> candidates{name, name + ".cfg", recipes_dir / name, recipes_dir / (name + ".cfg")};
    for (const auto& c : candidates) {
        if (fs::is_regular_file(c)) {
            return c;
        }
    }
    throw ad::ConfigurationError("recipe '" + name + "' not found (tried with and without .cfg, and under " +
                                 recipes_dir.string() + ")");
}

RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream* log) {
    RunResult result;
    result.dir = out_dir;
    fs::create_directories(out_dir);
    write_file(out_dir / "config.txt", to_text(cfg));

    struct Artifact {
        std::string path;
        bool deterministic;
    };
    std::vector<Artifact> artifacts{{"config.txt", true}};
    json seeds_json = json::array();

    for (std::uint64_t seed : cfg.seeds) {
        const std::string rel = seed_dir_name(seed);
        const fs::path dir = out_dir / rel;
        fs::create_directories(dir);
        ExperimentConfig one = cfg;
        one.seeds = {seed};
        write_file(dir / "config.txt", to_text(one));
        artifacts.push_back({rel + "/config.txt", true});

        Trainer trainer(cfg.for_seed(seed));
        const std::set<std::size_t> confmap_epochs(cfg.confmap_epochs.begin(), cfg.confmap_epochs.end());
        auto on_epoch = [&](std::size_t epoch, Trainer& t) {
            if (confmap_epochs.count(epoch)) {
                const ConfidenceMap map = confidence_map([&t](const Tensor& x) { return t.realness(x); },
                                                         cfg.confmap_bounds, cfg.confmap_resolution);
                const std::string name = "confmap_epoch" + std::to_string(epoch) + ".csv";
                write_stream(dir / name, [&map](std::ostream& os) { map.write_csv(os); });
                artifacts.push_back({rel + "/" + name, true});
            }
            if (log && epoch > 0 && (epoch % cfg.train.metrics.interval == 0 || epoch == cfg.train.epochs)) {
                *log << "[" << cfg.recipe << " seed " << seed << "] epoch " << epoch << "/" << cfg.train.epochs
                     << '\n';
            }
        };
        RunRecord record = trainer.train(on_epoch);

        std::vector<std::string> header{"mafgan run record v1", "seed = " + std::to_string(seed)};
        for (const auto& line : to_lines(one)) {
            header.push_back(line);
        }
        write_stream(dir / "record.csv", [&](std::ostream& os) { record.write_csv(os, header); });
        write_file(dir / "summary.json", dump(summarize(cfg, seed, record)));
        write_file(dir / "timing.json", dump(timing_json(record)));
        artifacts.push_back({rel + "/record.csv", true});
        artifacts.push_back({rel + "/summary.json", true});
        artifacts.push_back({rel + "/timing.json", false});

        const Matrix samples = trainer.evaluation_samples();
        write_stream(dir / "samples_final.csv", [&samples](std::ostream& os) {
            os << "x,y\n";
            for (Eigen::Index i = 0; i < samples.rows(); ++i) {
                os << format_double(samples(i, 0)) << ',' << format_double(samples(i, 1)) << '\n';
            }
        });
        artifacts.push_back({rel + "/samples_final.csv", true});
        const auto hist = weight_histogram(trainer.discriminator().parameters(), cfg.histogram_bins);
        write_stream(dir / "histogram_final.csv", [&hist](std::ostream& os) { write_histogram_csv(os, hist); });
        artifacts.push_back({rel + "/histogram_final.csv", true});
        if (cfg.save_checkpoints) {
            save_checkpoint(dir / "generator.ckpt.json", trainer.generator_state());
            save_checkpoint(dir / "critic.ckpt.json", trainer.critic_state());
            artifacts.push_back({rel + "/generator.ckpt.json", true});
            artifacts.push_back({rel + "/critic.ckpt.json", true});
        }
        if (log) {
            *log << "[" << cfg.recipe << " seed " << seed << "] "
                 << (record.complete ? "complete" : "ABORTED: " + record.failure) << '\n';
        }
        seeds_json.push_back({{"seed", seed}, {"dir", rel}, {"complete", record.complete}});
        result.seeds.push_back({seed, dir, std::move(record)});
    }

    std::sort(artifacts.begin(), artifacts.end(), [](const Artifact& a, const Artifact& b) { return a.path < b.path; });
    json manifest;
    manifest["format"] = "mafgan-manifest/1";
    manifest["recipe"] = cfg.recipe;
    manifest["seeds"] = seeds_json;
    json files = json::array();
    for (const auto& a : artifacts) {
        files.push_back({{"path", a.path},
                         {"sha256", sha256_file(out_dir / a.path)},
                         {"bytes", fs::file_size(out_dir / a.path)},
                         {"deterministic", a.deterministic}});
    }
    manifest["artifacts"] = files;
    write_file(out_dir / "manifest.json", dump(manifest));
    return result;
}

// ---- compare ------------------------------------------------------------

std::vector<SeedSummary> read_summaries(const fs::path& run_dir) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        if (entry.is_directory() && entry.path().filename().string().starts_with("seed-") &&
            fs::exists(entry.path() / "summary.json")) {
            dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<SeedSummary> out;
    for (const auto& d : dirs) {
        const json j = json::parse(read_file(d / "summary.json"));
        SeedSummary s;
        s.seed = j.at("seed").get<std::uint64_t>();
        s.complete = j.at("complete").get<bool>();
        s.failure = j.at("failure").get<std::string>();
        const json& fin = j.at("final");
        if (fin.is_object()) {
            s.final_frechet = optional_from(fin, "frechet");
            s.final_modes = optional_from(fin, "modes");
            s.final_probe_mean = optional_from(fin, "probe_mean");
        }
        s.best_frechet = optional_from(j, "best_frechet");
        s.probe_mean_variance = optional_from(j, "probe_mean_variance");
        for (const auto& snap : j.at("snapshots")) {
            if (!snap.at("frechet").is_null()) {
                s.frechet_series.emplace_back(snap.at("epoch").get<std::size_t>(), snap.at("frechet").get<double>());
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

Stat describe(const std::vector<double>& values) {
    Stat s;
    s.n = values.size();
    if (values.empty()) {
        return s;
    }
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= static_cast<double>(s.n);
    if (s.n >= 2) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

Comparison compare_runs(const std::vector<fs::path>& run_dirs) {
    if (run_dirs.size() < 2) {
        throw ad::ContractError("compare needs at least two run directories, got " + std::to_string(run_dirs.size()));
    }
    Comparison cmp;
    std::set<std::string> recipes;
    std::set<std::size_t> epochs;
    std::vector<std::map<std::size_t, std::vector<double>>> per_run_series;

    for (const auto& dir : run_dirs) {
        const ExperimentConfig cfg = load_config(dir / "config.txt");
        recipes.insert(cfg.recipe);
        ComparisonRow row;
        row.run = dir.string();
        row.recipe = cfg.recipe;
        std::map<std::string, std::vector<double>> metric_values;
        std::map<std::size_t, std::vector<double>> series;
        for (const auto& s : read_summaries(dir)) {
            if (!s.complete) {
                cmp.warnings.push_back(dir.string() + ": seed " + std::to_string(s.seed) +
                                       " incomplete, excluded (" + s.failure + ")");
                continue;
            }
            ++row.seeds_used;
            auto add = [&metric_values](const char* name, const std::optional<double>& v) {
                if (v) {
                    metric_values[name].push_back(*v);
                }
            };
            add("final_frechet", s.final_frechet);
            add("best_frechet", s.best_frechet);
            add("final_modes", s.final_modes);
            add("final_probe_mean", s.final_probe_mean);
            add("probe_mean_variance", s.probe_mean_variance);
            for (const auto& [epoch, value] : s.frechet_series) {
                series[epoch].push_back(value);
                epochs.insert(epoch);
            }
        }
        if (row.seeds_used == 0) {
            cmp.warnings.push_back(dir.string() + ": no complete seeds");
        }
        for (const char* name :
             {"final_frechet", "best_frechet", "final_modes", "final_probe_mean", "probe_mean_variance"}) {
            row.metrics.emplace_back(name, describe(metric_values[name]));
        }
        cmp.rows.push_back(std::move(row));
        per_run_series.push_back(std::move(series));
    }
    cmp.recipe_mismatch = recipes.size() > 1;
    if (cmp.recipe_mismatch) {
        cmp.warnings.emplace_back("runs come from different recipes; compared anyway");
    }
    cmp.epochs.assign(epochs.begin(), epochs.end());
    for (std::size_t e : cmp.epochs) {
        std::vector<std::optional<Stat>> at_epoch;
        for (const auto& series : per_run_series) {
            const auto it = series.find(e);
            at_epoch.push_back(it == series.end() ? std::nullopt : std::optional<Stat>(describe(it->second)));
        }
        cmp.series.push_back(std::move(at_epoch));
    }
    return cmp;
}

void write_comparison(const Comparison& cmp, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_stream(out_dir / "compare.csv", [&cmp](std::ostream& os) {
        os << "run,recipe,seeds_used";
        if (!cmp.rows.empty()) {
            for (const auto& [name, stat] : cmp.rows.front().metrics) {
                os << ',' << name << "_mean," << name << "_sd";
            }
        }
        os << ",warning\n";
        const std::size_t metric_cols = cmp.rows.empty() ? 0 : cmp.rows.front().metrics.size();
        for (const auto& row : cmp.rows) {
            os << row.run << ',' << row.recipe << ',' << row.seeds_used;
            for (const auto& [name, stat] : row.metrics) {
                if (stat.n == 0) {
                    os << ",,";
                } else {
                    os << ',' << format_double(stat.mean) << ',' << format_double(stat.sd);
                }
            }
            os << ",\n";
        }
        for (const auto& w : cmp.warnings) {
            os << ",,";
            for (std::size_t i = 0; i < metric_cols; ++i) {
                os << ",,";
            }
            os << ",\"" << w << "\"\n";
        }
    });

    json j;
    j["recipe_mismatch"] = cmp.recipe_mismatch;
    j["warnings"] = cmp.warnings;
    json rows = json::array();
    for (const auto& row : cmp.rows) {
        json r;
        r["run"] = row.run;
        r["recipe"] = row.recipe;
        r["seeds_used"] = row.seeds_used;
        for (const auto& [name, stat] : row.metrics) {
            r["metrics"][name] = stat.n == 0 ? json(nullptr) : json{{"n", stat.n}, {"mean", stat.mean}, {"sd", stat.sd}};
        }
        rows.push_back(r);
    }
    j["rows"] = rows;
    write_file(out_dir / "compare.json", dump(j));

    write_stream(out_dir / "series.csv", [&cmp](std::ostream& os) {
        os << "epoch,run,frechet_mean,frechet_sd,n\n";
        for (std::size_t i = 0; i < cmp.epochs.size(); ++i) {
            for (std::size_t r = 0; r < cmp.rows.size(); ++r) {
                const auto& s = cmp.series[i][r];
                if (s) {
                    os << cmp.epochs[i] << ',' << cmp.rows[r].run << ',' << format_double(s->mean) << ','
                       << format_double(s->sd) << ',' << s->n << '\n';
                }
            }
        }
    });
}

// ---- saved runs ---------------------------------------------------------

Trainer restore_trainer(const fs::path& seed_dir) {
    const ExperimentConfig cfg = load_config(seed_dir / "config.txt");
    Trainer trainer(cfg.for_seed(cfg.seeds.front()));
    load_checkpoint(seed_dir / "generator.ckpt.json", trainer.generator_state());
    load_checkpoint(seed_dir / "critic.ckpt.json", trainer.critic_state());
    trainer.skip_pivot_warmup();
    return trainer;
}

ConfidenceMap confmap_from_run(const fs::path& seed_dir, const Bounds& bounds, std::size_t resolution) {
    Trainer trainer = restore_trainer(seed_dir);
    return confidence_map([&trainer](const Tensor& x) { return trainer.realness(x); }, bounds, resolution);
}

std::vector<LayerProbe> probe_from_run(const fs::path& seed_dir, std::size_t trials, std::size_t batch) {
    Trainer trainer = restore_trainer(seed_dir);
    const Matrix samples = trainer.evaluation_samples();
    const auto n = static_cast<Eigen::Index>(std::min<std::size_t>(
        {batch, static_cast<std::size_t>(samples.rows()), static_cast<std::size_t>(trainer.dataset().rows())}));
    const Tensor xr = Tensor::constant(trainer.dataset().topRows(n));
    const Tensor xg = Tensor::constant(samples.topRows(n));
    std::vector<LayerProbe> out;
    for (std::size_t layer = 1; layer <= nn::Discriminator::kLayers; ++layer) {
        Rng rng(trainer.config().seed, "probe.cli");
        out.push_back({layer, continuity_probe(trainer.discriminator(), xr, xg, layer, trials, rng)});
    }
    return out;
}

}  // namespace mafgan

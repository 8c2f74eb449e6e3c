#pragma once

#include "mafgan/config.hpp"
#include "mafgan/constraints.hpp"
#include "mafgan/metrics.hpp"
#include "mafgan/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace mafgan {

namespace fs = std::filesystem;

struct SeedResult {
    std::uint64_t seed = 0;
    fs::path dir;
    RunRecord record;
};

struct RunResult {
    fs::path dir;
    std::vector<SeedResult> seeds;

    [[nodiscard]] bool all_complete() const;
};

// Accepts a path with or without the .cfg suffix, then the same under
// `recipes_dir`.
fs::path resolve_recipe(const std::string& name, const fs::path& recipes_dir = "recipes");

// Trains every seed into out_dir/seed-<s>/ and writes out_dir/manifest.json
// with a SHA-256 for each artifact. Aborted seeds keep their partial record
// and are marked incomplete in their summary.
RunResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream* log = nullptr);

// Per-seed summary statistics read back from summary.json.
struct SeedSummary {
    std::uint64_t seed = 0;
    bool complete = false;
    std::string failure;
    std::optional<double> final_frechet;
    std::optional<double> best_frechet;
    std::optional<double> final_modes;
    std::optional<double> final_probe_mean;
    std::optional<double> probe_mean_variance;  // across snapshots
    std::vector<std::pair<std::size_t, double>> frechet_series;
};

struct Stat {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation, 0 when n < 2
};

struct ComparisonRow {
    std::string run;
    std::string recipe;
    std::size_t seeds_used = 0;
    std::vector<std::pair<std::string, Stat>> metrics;
};

struct Comparison {
    std::vector<ComparisonRow> rows;
    std::vector<std::string> warnings;
    bool recipe_mismatch = false;
    // epoch -> per-run (mean, sd) of the Frechet distance
    std::vector<std::size_t> epochs;
    std::vector<std::vector<std::optional<Stat>>> series;
};

std::vector<SeedSummary> read_summaries(const fs::path& run_dir);
Stat describe(const std::vector<double>& values);

// Needs at least two run directories. Incomplete seeds are left out and
// reported in `warnings`.
Comparison compare_runs(const std::vector<fs::path>& run_dirs);
// compare.csv, compare.json and series.csv under out_dir.
void write_comparison(const Comparison& cmp, const fs::path& out_dir);

// Rebuilds the trainer of a finished seed directory and loads its checkpoints.
Trainer restore_trainer(const fs::path& seed_dir);

ConfidenceMap confmap_from_run(const fs::path& seed_dir, const Bounds& bounds, std::size_t resolution);

struct LayerProbe {
    std::size_t layer = 0;
    ProbeStats stats;
};

std::vector<LayerProbe> probe_from_run(const fs::path& seed_dir, std::size_t trials, std::size_t batch);

}  // namespace mafgan

#pragma once

// Experiment configuration files.
//
//   file    := { line }
//   line    := blank | comment | entry
//   comment := '#' text
//   entry   := key '=' value [ '#' text ]
//   list    := value { ',' value }
//
// Keys are dotted names from config_keys(); anything else is rejected. Each
// key may appear once. Every problem in a file is collected before failing.

#include "mafgan/autodiff.hpp"
#include "mafgan/metrics.hpp"
#include "mafgan/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mafgan {

class ConfigError : public ad::ConfigurationError {
public:
    explicit ConfigError(std::vector<std::string> problems);
    [[nodiscard]] const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct ExperimentConfig {
    std::string recipe = "custom";
    std::vector<std::uint64_t> seeds{0};
    TrainConfig train;
    std::vector<std::size_t> confmap_epochs{0, 100, 500};
    std::size_t confmap_resolution = 200;
    Bounds confmap_bounds;
    std::size_t histogram_bins = 50;
    bool save_checkpoints = true;

    [[nodiscard]] std::vector<std::string> violations() const;
    // Training configuration for one seed of this experiment.
    [[nodiscard]] TrainConfig for_seed(std::uint64_t seed) const;
};

[[nodiscard]] const std::vector<std::string>& config_keys();

// `overrides` are "key=value" strings applied after the file, each replacing
// whatever the file said.
ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Every key in config_keys() order; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& cfg);
// Same entries as "key = value" strings, for record headers.
std::vector<std::string> to_lines(const ExperimentConfig& cfg);

}  // namespace mafgan

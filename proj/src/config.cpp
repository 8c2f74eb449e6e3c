#include "mafgan/config.hpp"

#include "mafgan/io.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mafgan {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string msg = "invalid configuration:";
    for (const auto& p : problems) {
        msg += "\n  " + p;
    }
    return msg;
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    while (true) {
        const auto comma = s.find(',');
        out.push_back(trim(s.substr(0, comma)));
        if (comma == std::string_view::npos) {
            break;
        }
        s.remove_prefix(comma + 1);
    }
    return out;
}

double parse_double(std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw std::invalid_argument("expected a number, got '" + std::string(s) + "'");
    }
    return v;
}

std::uint64_t parse_uint(std::string_view s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
        throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
    }
    return v;
}

bool parse_bool(std::string_view s) {
    if (s == "true") {
        return true;
    }
    if (s == "false") {
        return false;
    }
    throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

template <class T, class F>
std::vector<T> parse_list(std::string_view s, F&& parse_one) {
    std::vector<T> out;
    if (trim(s).empty()) {
        return out;
    }
    for (auto item : split_list(s)) {
        out.push_back(static_cast<T>(parse_one(item)));
    }
    return out;
}

template <class T>
std::string join(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        if constexpr (std::is_floating_point_v<T>) {
            out += format_double(values[i]);
        } else {
            out += std::to_string(values[i]);
        }
    }
    return out;
}

struct Field {
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class Member>
Field size_field(Member member) {
    return {[member](ExperimentConfig& c, std::string_view v) { member(c) = static_cast<std::size_t>(parse_uint(v)); },
            [member](const ExperimentConfig& c) { return std::to_string(member(c)); }};
}

template <class Member>
Field double_field(Member member) {
    return {[member](ExperimentConfig& c, std::string_view v) { member(c) = parse_double(v); },
            [member](const ExperimentConfig& c) { return format_double(member(c)); }};
}

#define MAFGAN_REF(expr) [](auto& c) -> decltype(auto) { return (expr); }

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"recipe",
         {[](ExperimentConfig& c, std::string_view v) {
              if (v.empty()) {
                  throw std::invalid_argument("must not be empty");
              }
              c.recipe = std::string(v);
          },
          [](const ExperimentConfig& c) { return c.recipe; }}},
        {"seeds",
         {[](ExperimentConfig& c, std::string_view v) { c.seeds = parse_list<std::uint64_t>(v, parse_uint); },
          [](const ExperimentConfig& c) { return join(c.seeds); }}},
        {"train.n_critic", size_field(MAFGAN_REF(c.train.n_critic))},
        {"train.batch_size", size_field(MAFGAN_REF(c.train.batch_size))},
        {"train.epochs", size_field(MAFGAN_REF(c.train.epochs))},
        {"train.lr", double_field(MAFGAN_REF(c.train.lr))},
        {"train.lr_decay_factor", double_field(MAFGAN_REF(c.train.lr_decay_factor))},
        {"train.lr_decay_period", size_field(MAFGAN_REF(c.train.lr_decay_period))},
        {"train.beta1", double_field(MAFGAN_REF(c.train.adam.beta1))},
        {"train.beta2", double_field(MAFGAN_REF(c.train.adam.beta2))},
        {"train.adam_eps", double_field(MAFGAN_REF(c.train.adam.eps))},
        {"train.max_skip_fraction", double_field(MAFGAN_REF(c.train.max_skip_fraction))},
        {"objective.kind",
         {[](ExperimentConfig& c, std::string_view v) { c.train.objective.kind = parse_objective_kind(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.objective.kind)); }}},
        {"objective.generator_loss",
         {[](ExperimentConfig& c, std::string_view v) {
              if (v != "non-saturating" && v != "minimax") {
                  throw std::invalid_argument("expected non-saturating|minimax, got '" + std::string(v) + "'");
              }
              c.train.objective.non_saturating = v == "non-saturating";
          },
          [](const ExperimentConfig& c) {
              return std::string(c.train.objective.non_saturating ? "non-saturating" : "minimax");
          }}},
        {"constraint.kind",
         {[](ExperimentConfig& c, std::string_view v) { c.train.constraint.kind = parse_constraint_kind(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.constraint.kind)); }}},
        {"constraint.clip", double_field(MAFGAN_REF(c.train.constraint.clip))},
        {"constraint.gp_weight", double_field(MAFGAN_REF(c.train.constraint.gp_weight))},
        {"constraint.tc_weight", double_field(MAFGAN_REF(c.train.constraint.tc_weight))},
        {"constraint.tc_metric",
         {[](ExperimentConfig& c, std::string_view v) { c.train.constraint.tc_metric = parse_tc_metric(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.constraint.tc_metric)); }}},
        {"constraint.delta_std", double_field(MAFGAN_REF(c.train.constraint.delta_std))},
        {"constraint.probe_layer", size_field(MAFGAN_REF(c.train.constraint.probe_layer))},
        {"constraint.k_scale", double_field(MAFGAN_REF(c.train.constraint.k_scale))},
        {"generator.z_dim", size_field(MAFGAN_REF(c.train.generator.z_dim))},
        {"generator.hidden", size_field(MAFGAN_REF(c.train.generator.hidden))},
        {"generator.depth", size_field(MAFGAN_REF(c.train.generator.depth))},
        {"discriminator.hidden", size_field(MAFGAN_REF(c.train.discriminator.hidden))},
        {"discriminator.pieces", size_field(MAFGAN_REF(c.train.discriminator.pieces))},
        {"discriminator.embed_dim", size_field(MAFGAN_REF(c.train.discriminator.embed_dim))},
        {"data.kind",
         {[](ExperimentConfig& c, std::string_view v) { c.train.data.kind = parse_synthetic_kind(v); },
          [](const ExperimentConfig& c) { return std::string(to_string(c.train.data.kind)); }}},
        {"data.count", size_field(MAFGAN_REF(c.train.data.count))},
        {"data.spacing", double_field(MAFGAN_REF(c.train.data.spacing))},
        {"data.mode_std", double_field(MAFGAN_REF(c.train.data.mode_std))},
        {"data.radii",
         {[](ExperimentConfig& c, std::string_view v) { c.train.data.radii = parse_list<double>(v, parse_double); },
          [](const ExperimentConfig& c) { return join(c.train.data.radii); }}},
        {"data.ring_std", double_field(MAFGAN_REF(c.train.data.ring_std))},
        {"metrics.interval", size_field(MAFGAN_REF(c.train.metrics.interval))},
        {"metrics.eval_samples", size_field(MAFGAN_REF(c.train.metrics.eval_samples))},
        {"metrics.probe_trials", size_field(MAFGAN_REF(c.train.metrics.probe_trials))},
        {"metrics.probe_batch", size_field(MAFGAN_REF(c.train.metrics.probe_batch))},
        {"metrics.confmap_epochs",
         {[](ExperimentConfig& c, std::string_view v) {
              c.confmap_epochs = parse_list<std::size_t>(v, parse_uint);
          },
          [](const ExperimentConfig& c) { return join(c.confmap_epochs); }}},
        {"metrics.confmap_resolution", size_field(MAFGAN_REF(c.confmap_resolution))},
        {"metrics.confmap_bounds",
         {[](ExperimentConfig& c, std::string_view v) {
              const auto b = parse_list<double>(v, parse_double);
              if (b.size() != 4) {
                  throw std::invalid_argument("expected x_min, x_max, y_min, y_max");
              }
              c.confmap_bounds = {b[0], b[1], b[2], b[3]};
          },
          [](const ExperimentConfig& c) {
              const Bounds& b = c.confmap_bounds;
              return join(std::vector<double>{b.x_min, b.x_max, b.y_min, b.y_max});
          }}},
        {"metrics.histogram_bins", size_field(MAFGAN_REF(c.histogram_bins))},
        {"output.checkpoints",
         {[](ExperimentConfig& c, std::string_view v) { c.save_checkpoints = parse_bool(v); },
          [](const ExperimentConfig& c) { return std::string(c.save_checkpoints ? "true" : "false"); }}},
    };
    return table;
}

#undef MAFGAN_REF

const Field* find_field(std::string_view key) {
    for (const auto& [name, field] : fields()) {
        if (name == key) {
            return &field;
        }
    }
    return nullptr;
}

void apply(ExperimentConfig& cfg, std::string_view key, std::string_view value, const std::string& where,
           std::vector<std::string>& problems) {
    const Field* field = find_field(key);
    if (field == nullptr) {
        problems.push_back(where + "unknown key '" + std::string(key) + "'");
        return;
    }
    try {
        field->set(cfg, value);
    } catch (const std::exception& e) {
        problems.push_back(where + std::string(key) + ": " + e.what());
    }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : ad::ConfigurationError(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<std::string> ExperimentConfig::violations() const {
    std::vector<std::string> out = train.violations();
    if (seeds.empty()) {
        out.emplace_back("seeds must list at least one seed");
    }
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        out.emplace_back("seeds must be distinct");
    }
    if (confmap_resolution < 1) {
        out.emplace_back("metrics.confmap_resolution must be >= 1");
    }
    if (!(confmap_bounds.x_min < confmap_bounds.x_max && confmap_bounds.y_min < confmap_bounds.y_max)) {
        out.emplace_back("metrics.confmap_bounds must satisfy x_min < x_max and y_min < y_max");
    }
    if (histogram_bins < 1) {
        out.emplace_back("metrics.histogram_bins must be >= 1");
    }
    for (auto e : confmap_epochs) {
        if (e > train.epochs) {
            out.push_back("metrics.confmap_epochs: epoch " + std::to_string(e) + " exceeds train.epochs");
        }
    }
    return out;
}

TrainConfig ExperimentConfig::for_seed(std::uint64_t seed) const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [name, field] : fields()) {
            out.push_back(name);
        }
        return out;
    }();
    return keys;
}

ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
    ExperimentConfig cfg;
    std::vector<std::string> problems;
    std::set<std::string, std::less<>> seen;

    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::string where = "line " + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            problems.push_back(where + "expected 'key = value'");
            continue;
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (!seen.insert(std::string(key)).second) {
            problems.push_back(where + "duplicate key '" + std::string(key) + "'");
            continue;
        }
        apply(cfg, key, value, where, problems);
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) {
            problems.push_back("override '" + o + "': expected key=value");
            continue;
        }
        apply(cfg, trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)), "override: ",
              problems);
    }
    if (problems.empty()) {
        problems = cfg.violations();
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    return parse_config(read_file(path), overrides);
}

std::vector<std::string> to_lines(const ExperimentConfig& cfg) {
    std::vector<std::string> out;
    for (const auto& [name, field] : fields()) {
        out.push_back(name + " = " + field.get(cfg));
    }
    return out;
}

std::string to_text(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& line : to_lines(cfg)) {
        out += line + "\n";
    }
    return out;
}

}  // namespace mafgan

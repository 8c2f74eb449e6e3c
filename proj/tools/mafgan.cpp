#include "mafgan/config.hpp"
#include "mafgan/experiment.hpp"
#include "mafgan/io.hpp"
#include "mafgan/verify.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace mafgan;

namespace {

int cmd_run(const std::string& recipe, const std::string& out, const std::vector<std::uint64_t>& seeds,
            std::vector<std::string> overrides, bool quiet) {
    const fs::path path = resolve_recipe(recipe);
    if (!seeds.empty()) {
        std::string list;
        for (auto s : seeds) {
            list += (list.empty() ? "" : ",") + std::to_string(s);
        }
        overrides.push_back("seeds=" + list);
    }
    const ExperimentConfig cfg = load_config(path, overrides);
    const fs::path out_dir = out.empty() ? fs::path("runs") / cfg.recipe : fs::path(out);
    const RunResult result = run_experiment(cfg, out_dir, quiet ? nullptr : &std::cerr);
    for (const auto& s : result.seeds) {
        const auto snaps = s.record.snapshots();
        std::cout << "seed " << s.seed << ": " << (s.record.complete ? "complete" : "aborted (" + s.record.failure + ")");
        if (!snaps.empty() && snaps.back()->frechet) {
            std::cout << ", frechet " << format_double(*snaps.back()->frechet);
        }
        if (!snaps.empty() && snaps.back()->modes) {
            std::cout << ", modes " << *snaps.back()->modes << "/9";
        }
        std::cout << '\n';
    }
    std::cout << "wrote " << out_dir.string() << '\n';
    return result.all_complete() ? 0 : 1;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out) {
    std::vector<fs::path> paths(dirs.begin(), dirs.end());
    const Comparison cmp = compare_runs(paths);
    write_comparison(cmp, out);
    for (const auto& row : cmp.rows) {
        std::cout << row.recipe << " (" << row.run << ", " << row.seeds_used << " seeds)";
        for (const auto& [name, stat] : row.metrics) {
            if (stat.n > 0) {
                std::cout << "  " << name << " " << format_double(stat.mean) << " sd " << format_double(stat.sd);
            }
        }
        std::cout << '\n';
    }
    for (const auto& w : cmp.warnings) {
        std::cout << "warning: " << w << '\n';
    }
    std::cout << "wrote " << out << "/compare.csv, compare.json, series.csv\n";
    return 0;
}

int cmd_verify(const VerifyOptions& options) {
    const auto checks = verify_all(options);
    print_checks(std::cout, checks);
    std::size_t failed = 0;
    for (const auto& c : checks) {
        failed += c.passed ? 0 : 1;
    }
    std::cout << (checks.size() - failed) << "/" << checks.size() << " checks passed\n";
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MaF-GAN laboratory: 2-D adversarial training with topological consistency"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "train every seed of a recipe");
    std::string recipe;
    std::string run_out;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> overrides;
    bool quiet = false;
    run->add_option("recipe", recipe, "recipe file, with or without .cfg")->required();
    run->add_option("--out", run_out, "output directory (default runs/<recipe>)");
    run->add_option("--seed", seeds, "seed(s) replacing the recipe's list");
    run->add_option("--set", overrides, "override a config key, key=value");
    run->add_flag("--quiet", quiet, "no progress output");

    auto* compare = app.add_subcommand("compare", "tabulate metrics across run directories");
    std::vector<std::string> compare_dirs;
    std::string compare_out = "comparison";
    compare->add_option("runs", compare_dirs, "run directories")->required();
    compare->add_option("--out", compare_out, "output directory");

    auto* verify = app.add_subcommand("verify", "theorem properties, gradient checks and metric oracles");
    VerifyOptions vopt;
    std::string mutate;
    verify->add_option("--seed", vopt.seed, "seed for the random draws");
    verify->add_option("--fd-networks", vopt.fd_networks, "random networks per gradient check");
    verify->add_option("--mutate", mutate, "deliberately break a component (tc-order)")
        ->check(CLI::IsMember({"tc-order"}));

    auto* confmap = app.add_subcommand("confmap", "realness field of a trained critic as CSV");
    std::string confmap_dir;
    std::string confmap_out;
    std::size_t resolution = 200;
    std::vector<double> bounds{-3.0, 3.0, -3.0, 3.0};
    confmap->add_option("seed_dir", confmap_dir, "seed directory of a finished run")->required();
    confmap->add_option("--resolution", resolution, "grid points per axis");
    confmap->add_option("--bounds", bounds, "x_min x_max y_min y_max")->expected(4);
    confmap->add_option("--out", confmap_out, "CSV path (default stdout)");

    auto* probe = app.add_subcommand("probe", "consistency residual at every critic layer");
    std::string probe_dir;
    std::size_t trials = 32;
    std::size_t batch = 256;
    probe->add_option("seed_dir", probe_dir, "seed directory of a finished run")->required();
    probe->add_option("--trials", trials, "independent mixing draws");
    probe->add_option("--batch", batch, "pairs per draw");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            return cmd_run(recipe, run_out, seeds, overrides, quiet);
        }
        if (*compare) {
            return cmd_compare(compare_dirs, compare_out);
        }
        if (*verify) {
            vopt.mutate_tc_order = mutate == "tc-order";
            return cmd_verify(vopt);
        }
        if (*confmap) {
            const ConfidenceMap map =
                confmap_from_run(confmap_dir, {bounds[0], bounds[1], bounds[2], bounds[3]}, resolution);
            if (confmap_out.empty()) {
                map.write_csv(std::cout);
            } else {
                std::ofstream os(confmap_out);
                map.write_csv(os);
            }
            return 0;
        }
        if (*probe) {
            std::cout << "layer,mean,variance\n";
            for (const auto& p : probe_from_run(probe_dir, trials, batch)) {
                std::cout << p.layer << ',' << format_double(p.stats.mean) << ',' << format_double(p.stats.variance)
                          << '\n';
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

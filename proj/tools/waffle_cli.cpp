#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "waffle/experiment.hpp"

namespace {

// Applies common command-line overrides on top of a parsed config file.
waffle::ExperimentConfig load_config(const std::string& path, const std::string& seed,
                                     const std::string& out_dir) {
    waffle::ExperimentConfig cfg = waffle::ExperimentConfig::parse_file(path);
    if (!seed.empty()) cfg.set("fed.seed", seed);
    if (!out_dir.empty()) cfg.set("output.dir", out_dir);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"waffle: federated learning with a shared dictionary of weight factors"};
    app.require_subcommand(1);

    std::string config_path, seed, out_dir;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment configuration file")->required();
        cmd->add_option("--seed", seed, "override fed.seed");
        cmd->add_option("--out-dir", out_dir, "override output.dir");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_common(run);
    CLI::App* sweep = app.add_subcommand("sweep", "run every cell of the sweep grid");
    add_common(sweep);
    CLI::App* mia = app.add_subcommand("mia", "run the membership inference harness");
    add_common(mia);

    std::string preset, algorithm;
    CLI::App* count = app.add_subcommand("count-params", "print the learnable parameter count");
    count->add_option("preset", preset, "model preset name")->required();
    count->add_option("algorithm", algorithm, "waffle | fedavg | fedprox")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const waffle::RunArtifacts artifacts =
                waffle::run_experiment(load_config(config_path, seed, out_dir), /*verbose=*/true);
            std::cout << "artifacts in " << artifacts.dir << std::endl;
        } else if (sweep->parsed()) {
            const auto cells =
                waffle::run_sweep(load_config(config_path, seed, out_dir), /*verbose=*/true);
            std::cout << cells.size() << " sweep cells complete" << std::endl;
        } else if (mia->parsed()) {
            const waffle::MiaArtifacts artifacts =
                waffle::run_mia_experiment(load_config(config_path, seed, out_dir), true);
            std::cout << "artifacts in " << artifacts.dir << std::endl;
        } else if (count->parsed()) {
            const waffle::ModelConfig model = waffle::ModelConfig::preset(preset);
            std::cout << waffle::count_parameters(model, waffle::algorithm_from_string(algorithm))
                      << std::endl;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

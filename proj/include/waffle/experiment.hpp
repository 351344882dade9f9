#pragma once

#include <optional>
#include <string>
#include <vector>

#include "waffle/config.hpp"
#include "waffle/federation.hpp"
#include "waffle/metrics.hpp"
#include "waffle/mia.hpp"

namespace waffle {

// Fully materialized experiment inputs derived from a configuration.
struct ResolvedExperiment {
    LabeledDataset data;
    PartitionResult partition;
    ModelConfig model;
    RoundConfig fed;
    IbpSettings ibp;
    std::string out_dir;
    std::size_t eval_every = 5;
    std::size_t threads = 0;
    bool multimodal = false;
    std::string data_preset;
};

ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg);

struct RunArtifacts {
    std::string dir;
    std::vector<std::string> files;
    double final_mean_accuracy = 0.0;
    std::optional<FairnessReport> fairness;
    std::uint64_t config_hash = 0;
};

// Executes one configuration end to end and writes its artifact set
// (resolved config, history/clients CSVs, fairness summary, plot data).
RunArtifacts run_experiment(const ExperimentConfig& cfg, bool verbose = false);

// Expands sweep.* grids and runs one cell per combination, each in its own
// subdirectory of output.dir.
std::vector<RunArtifacts> run_sweep(const ExperimentConfig& cfg, bool verbose = false);

// Shadow-model membership inference per the mia.* keys.
struct MiaArtifacts {
    std::string dir;
    AttackReport report;
    std::uint64_t config_hash = 0;
};
MiaArtifacts run_mia_experiment(const ExperimentConfig& cfg, bool verbose = false);

// Two-column (round, value) plot files: mean accuracy, plus majority and
// minority curves for multimodal runs. Returns the paths written.
std::vector<std::string> emit_plot_data(const TrainingHistory& history, bool multimodal,
                                        const std::string& dir);

// Write-to-temp-then-rename so partial artifacts are never observed.
void atomic_write(const std::string& path, const std::string& content);

}  // namespace waffle

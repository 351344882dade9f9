#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waffle/data.hpp"
#include "waffle/federation.hpp"

namespace waffle {

// Shadow-model membership inference against a federated target. Every
// pipeline (target and shadows) is a federation trained with the same
// configuration on disjoint data; the attacker holds one intercepted client
// update per pipeline and completes WAFFLe views without any variational
// state.
struct ShadowConfig {
    std::size_t num_shadows = 3;
    ModelConfig model;
    RoundConfig fed;
    IbpSettings ibp;
    std::size_t clients = 4;              // clients per pipeline
    std::size_t z = 0;                    // classes per client; 0 = all classes
    double test_fraction = 0.2;
    std::size_t examples_per_client = 120;
    // WAFFLe completion for the attacker-held view.
    enum class ViewCompletion { all_ones, prior_sample };
    ViewCompletion completion = ViewCompletion::all_ones;

    void validate() const;
};

struct AttackRow {
    std::vector<double> sorted_confidence;  // descending softmax probabilities
    int true_class = 0;
    bool member = false;
};

struct AttackDataset {
    std::vector<AttackRow> rows;
    std::size_t num_classes = 0;
};

struct AttackReport {
    double accuracy = 0.0;
    double f1 = 0.0;  // membership = positive class
    std::vector<double> per_class_accuracy;
    std::vector<std::string> warnings;
};

// One trained pipeline plus the attacker's interception of its victim
// client. The view parameters come solely from a decoded UpdateMessage.
struct Pipeline {
    LabeledDataset local;           // this pipeline's private pool
    LabeledDataset held_out;        // same-distribution rows never trained on
    PartitionResult partition;
    RunResult run;
    FactorDictionary view;          // decoded intercepted update
    std::uint32_t victim = 0;
};

// Class-stratified deterministic slicing of the source pool into
// target + shadow pipelines with per-pipeline held-out rows. All slices are
// pairwise disjoint.
struct MiaPlan {
    std::vector<std::vector<std::size_t>> pipeline_rows;  // [0] target, [1..] shadows
    std::vector<std::vector<std::size_t>> held_out_rows;
};

MiaPlan plan_mia_split(const LabeledDataset& data, const ShadowConfig& cfg, std::uint64_t seed);

// Trains one pipeline on its slice and intercepts the victim's final update.
Pipeline train_pipeline(const LabeledDataset& data, const std::vector<std::size_t>& pool_rows,
                        const std::vector<std::size_t>& out_rows, const ShadowConfig& cfg,
                        std::uint64_t seed);

// Trains the shadow ensemble (pipelines 1..num_shadows of the plan).
std::vector<Pipeline> train_shadows(const LabeledDataset& data, const MiaPlan& plan,
                                    const ShadowConfig& cfg, std::uint64_t seed);

// Sorted-confidence feature rows from each shadow's victim train set (members)
// and held-out rows (non-members), balanced per class by construction.
AttackDataset build_attack_dataset(const std::vector<Pipeline>& shadows, const ShadowConfig& cfg,
                                   std::uint64_t seed);

// Trains one regularized logistic regression per class on the attack rows
// and evaluates membership prediction on the target's in/out examples.
AttackReport run_attack(const AttackDataset& attack_data, const Pipeline& target,
                        const ShadowConfig& cfg, std::uint64_t seed);

struct MiaOutcome {
    AttackReport report;
    AttackDataset attack_train;
    Pipeline target;
};

// Full harness: slice, train target + shadows, attack.
MiaOutcome run_mia(const LabeledDataset& data, const ShadowConfig& cfg, std::uint64_t seed);

// Feature extraction for one example through an attacker-completed view.
AttackRow featurize(const ModelConfig& model, const FactorDictionary& view,
                    const ShadowConfig& cfg, const LabeledDataset& data, std::size_t row,
                    bool member, std::uint64_t seed);

}  // namespace waffle

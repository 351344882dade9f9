#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "waffle/data.hpp"
#include "waffle/factor_model.hpp"
#include "waffle/ibp.hpp"
#include "waffle/partition.hpp"
#include "waffle/wire.hpp"

namespace waffle {

struct GlobalState {
    FactorDictionary params;
    std::uint32_t round = 0;
};

struct RoundConfig {
    std::size_t rounds = 1;        // T
    double fraction = 0.1;         // C
    std::size_t local_epochs = 1;  // E
    std::size_t batch_size = 10;   // B
    double lr = 0.04;
    double mu = 0.0;  // FedProx proximal coefficient
    Algorithm algorithm = Algorithm::fedavg;
    std::vector<double> client_weights;  // p_i; empty = uniform
    std::uint64_t seed = 1;

    void validate(std::size_t n_clients) const;
};

struct IbpSettings {
    double alpha = 1.0;
    RelaxationConfig relax;
    // Evaluation for clients that were never queried: b = all-ones uses every
    // aggregated factor; prior_sample draws b from the IBP prior instead.
    enum class UnqueriedEval { all_ones, prior_sample };
    UnqueriedEval unqueried = UnqueriedEval::all_ones;
};

struct RoundRecord {
    std::uint32_t round = 0;
    std::vector<std::uint32_t> selected;  // ascending client ids
    bool evaluated = false;
    std::vector<double> client_accuracy;  // one per client when evaluated
    double mean_accuracy = 0.0;
    bool has_groups = false;
    double majority_accuracy = 0.0;
    double minority_accuracy = 0.0;
    double wall_ms = 0.0;
};

struct TrainingHistory {
    std::vector<RoundRecord> rounds;
};

using TrafficObserver =
    std::function<void(std::uint32_t round, std::uint32_t client, const std::vector<std::uint8_t>&)>;

struct RunOptions {
    std::size_t eval_every = 5;  // all clients evaluated every k rounds and at the end
    std::size_t threads = 1;     // concurrent client updates within a round
    TrafficObserver traffic_observer;
    bool reverse_execution = false;  // test hook: run clients in reverse order
    std::function<void(const RoundRecord&)> on_round;
};

struct RunResult {
    GlobalState state;
    std::map<std::uint32_t, ClientVariationalState> varstates;
    TrainingHistory history;
};

GlobalState init_global_state(const ModelConfig& model, Algorithm algorithm, std::uint64_t seed);

// E local epochs of minibatch SGD on the negative ELBO; returns updated
// copies of the globals and the client's variational state.
std::pair<GlobalState, ClientVariationalState> waffle_client_update(
    const GlobalState& globals, const ClientVariationalState& varstate,
    const LabeledDataset& data, const ClientData& client, const ModelConfig& model,
    const RoundConfig& cfg, const IbpSettings& ibp);

// E local epochs of minibatch SGD on cross-entropy over a full model copy.
GlobalState fedavg_client_update(const GlobalState& globals, const LabeledDataset& data,
                                 const ClientData& client, const ModelConfig& model,
                                 const RoundConfig& cfg);

// FedAvg plus the proximal penalty (mu/2)*||theta - theta_round_start||^2.
GlobalState fedprox_client_update(const GlobalState& globals, const LabeledDataset& data,
                                  const ClientData& client, const ModelConfig& model,
                                  const RoundConfig& cfg);

// Weighted average of shape-compatible updates; weights renormalized over
// the given updates.
FactorDictionary aggregate_mean(const std::vector<FactorDictionary>& updates,
                                const std::vector<double>& weights);

// Test accuracy in [0,1]. WAFFLe clients with variational state evaluate
// with hardened b; never-queried clients fall back per IbpSettings.
double evaluate_client(const GlobalState& globals, const ClientVariationalState* varstate,
                       const LabeledDataset& data, const ClientData& client,
                       const ModelConfig& model, const RoundConfig& cfg, const IbpSettings& ibp);

// Algorithm main loop: T rounds of sample / distribute / local update /
// aggregate, with client->server updates passing through the wire codec.
RunResult run_training(const RoundConfig& cfg, const LabeledDataset& data,
                       const PartitionResult& partition, const ModelConfig& model,
                       const IbpSettings& ibp, const RunOptions& options = {});

}  // namespace waffle

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "waffle/data.hpp"
#include "waffle/rng.hpp"

namespace waffle {

enum class GroupTag { none, majority, minority };

std::string_view to_string(GroupTag g);

// One client's slice of the global pool, stored as row indices into the
// shared dataset. Train and test are disjoint by construction.
struct ClientData {
    std::uint32_t id = 0;
    GroupTag group = GroupTag::none;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::string> warnings;

    std::size_t size() const { return train.size() + test.size(); }
};

struct PartitionResult {
    std::vector<ClientData> clients;
    std::size_t discarded = 0;  // surplus examples left unused
};

// Majority/minority class split for multimodal partitioning.
struct GroupSpec {
    std::vector<int> majority_classes;
    std::vector<int> minority_classes;
    std::size_t n_majority = 0;
    std::size_t n_minority = 0;
};

// Named presets: mnist (odd 100 / even 20), fmnist (other 90 / footwear+shirts 20),
// cifar10 (animals 90 / vehicles 20).
GroupSpec group_preset(std::string_view dataset);

// Sort-by-class shard-and-deal partition: N*Z single-class shards, Z dealt
// to each client, each client's pool shuffled and split into local
// train/test sets.
PartitionResult partition_unimodal(const LabeledDataset& data, std::size_t n_clients,
                                   std::size_t z, double test_fraction, std::uint64_t seed);

// Shard-and-deal within majority/minority class groups with equal shard
// sizes across groups; surplus data is discarded.
PartitionResult partition_multimodal(const LabeledDataset& data, const GroupSpec& groups,
                                     std::size_t z, double test_fraction, std::uint64_t seed);

// Shuffled split of a client pool, stratified by class when every class has
// at least 2 examples; otherwise unstratified with a warning record.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> local_split(
    const std::vector<std::size_t>& pool, const std::vector<int>& labels, double test_fraction,
    RngStream& rng, std::vector<std::string>* warnings);

}  // namespace waffle

#include "waffle/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "waffle/error.hpp"

namespace waffle {

std::string_view to_string(GroupTag g) {
    switch (g) {
        case GroupTag::none: return "none";
        case GroupTag::majority: return "majority";
        case GroupTag::minority: return "minority";
    }
    return "?";
}

GroupSpec group_preset(std::string_view dataset) {
    GroupSpec g;
    if (dataset == "mnist") {
        g.majority_classes = {1, 3, 5, 7, 9};
        g.minority_classes = {0, 2, 4, 6, 8};
        g.n_majority = 100;
        g.n_minority = 20;
    } else if (dataset == "fmnist") {
        // Minority: t-shirt/top, sandal, shirt, sneaker, ankle boot.
        g.majority_classes = {1, 2, 3, 4, 8};
        g.minority_classes = {0, 5, 6, 7, 9};
        g.n_majority = 90;
        g.n_minority = 20;
    } else if (dataset == "cifar10") {
        g.majority_classes = {2, 3, 4, 5, 6, 7};
        g.minority_classes = {0, 1, 8, 9};
        g.n_majority = 90;
        g.n_minority = 20;
    } else {
        throw ConfigError("no group preset for dataset: " + std::string(dataset));
    }
    return g;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& data) {
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    return by_class;
}

// Cuts `count` shards of `size` examples from a shuffled class pool.
std::vector<std::vector<std::size_t>> cut_shards(std::vector<std::size_t>& pool,
                                                 std::size_t count, std::size_t size) {
    std::vector<std::vector<std::size_t>> shards;
    shards.reserve(count);
    for (std::size_t s = 0; s < count; ++s)
        shards.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(s * size),
                            pool.begin() + static_cast<std::ptrdiff_t>((s + 1) * size));
    return shards;
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> local_split(
    const std::vector<std::size_t>& pool, const std::vector<int>& labels, double test_fraction,
    RngStream& rng, std::vector<std::string>* warnings) {
    if (pool.empty()) throw ContractError("local_split: empty pool");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ContractError("local_split: fraction must be in (0,1)");

    if (pool.size() == 1) {
        if (warnings) warnings->push_back("single-example pool: no local test set");
        return {pool, {}};
    }

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t idx : pool) by_class[labels[idx]].push_back(idx);

    bool stratifiable = true;
    for (const auto& [cls, members] : by_class)
        if (members.size() < 2) stratifiable = false;

    std::vector<std::size_t> train, test;
    if (stratifiable) {
        for (auto& [cls, members] : by_class) {
            rng.shuffle(members);
            const auto n_test = static_cast<std::size_t>(
                std::llround(test_fraction * static_cast<double>(members.size())));
            test.insert(test.end(), members.begin(),
                        members.begin() + static_cast<std::ptrdiff_t>(n_test));
            train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test),
                         members.end());
        }
        if (test.empty()) {
            // Tiny pool rounded every class share to zero; move one example over.
            test.push_back(train.back());
            train.pop_back();
        }
    } else {
        if (warnings)
            warnings->push_back("class with fewer than 2 examples: unstratified local split");
        std::vector<std::size_t> shuffled = pool;
        rng.shuffle(shuffled);
        auto n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(shuffled.size())));
        n_test = std::max<std::size_t>(1, std::min(n_test, shuffled.size() - 1));
        test.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test), shuffled.end());
    }
    return {train, test};
}

PartitionResult partition_unimodal(const LabeledDataset& data, std::size_t n_clients,
                                   std::size_t z, double test_fraction, std::uint64_t seed) {
    if (n_clients < 1 || z < 1) throw ConfigError("partition: N and Z must be >= 1");
    const std::size_t classes = data.num_classes;
    if ((n_clients * z) % classes != 0)
        throw ConfigError("partition_unimodal: N*Z must be divisible by the class count");
    const std::size_t shards_per_class = n_clients * z / classes;

    RngStream rng(seed, 0, kPartitionStream);
    auto by_class = indices_by_class(data);

    std::vector<std::vector<std::size_t>> shards;
    for (std::size_t c = 0; c < classes; ++c) {
        auto& pool = by_class[c];
        const std::size_t shard_size = pool.size() / shards_per_class;
        if (shard_size == 0)
            throw ConfigError("partition_unimodal: class " + std::to_string(c) +
                              " has too few examples for " + std::to_string(shards_per_class) +
                              " shards");
        rng.shuffle(pool);
        auto cut = cut_shards(pool, shards_per_class, shard_size);
        for (auto& s : cut) shards.push_back(std::move(s));
    }
    rng.shuffle(shards);

    PartitionResult result;
    std::size_t allocated = 0;
    for (std::uint32_t i = 0; i < n_clients; ++i) {
        ClientData client;
        client.id = i;
        std::vector<std::size_t> pool;
        for (std::size_t k = 0; k < z; ++k) {
            const auto& shard = shards[i * z + k];
            pool.insert(pool.end(), shard.begin(), shard.end());
        }
        allocated += pool.size();
        auto [train, test] = local_split(pool, data.labels, test_fraction, rng,
                                         &client.warnings);
        client.train = std::move(train);
        client.test = std::move(test);
        result.clients.push_back(std::move(client));
    }
    result.discarded = data.size() - allocated;
    return result;
}

PartitionResult partition_multimodal(const LabeledDataset& data, const GroupSpec& groups,
                                     std::size_t z, double test_fraction, std::uint64_t seed) {
    if (groups.n_majority < 1 || groups.n_minority < 1 || z < 1)
        throw ConfigError("partition_multimodal: client counts and Z must be >= 1");
    for (int c : groups.majority_classes)
        for (int c2 : groups.minority_classes)
            if (c == c2) throw ConfigError("partition_multimodal: groups must be disjoint");

    struct Group {
        const std::vector<int>* classes;
        std::size_t n_clients;
        GroupTag tag;
    };
    const Group plan[2] = {
        {&groups.majority_classes, groups.n_majority, GroupTag::majority},
        {&groups.minority_classes, groups.n_minority, GroupTag::minority},
    };

    auto by_class = indices_by_class(data);
    RngStream rng(seed, 0, kPartitionStream);

    // Shard counts per class per group; shard size is equalized across all
    // classes of both groups, so every client ends up with z*s examples.
    std::size_t shard_size = SIZE_MAX;
    std::size_t shards_per_class[2] = {0, 0};
    for (int g = 0; g < 2; ++g) {
        const auto& classes = *plan[g].classes;
        if (classes.empty()) throw ConfigError("partition_multimodal: empty class group");
        if ((plan[g].n_clients * z) % classes.size() != 0)
            throw ConfigError("partition_multimodal: N*Z must be divisible by group class count");
        shards_per_class[g] = plan[g].n_clients * z / classes.size();
        for (int c : classes) {
            if (c < 0 || static_cast<std::size_t>(c) >= data.num_classes)
                throw ConfigError("partition_multimodal: class id out of range");
            shard_size = std::min(shard_size, by_class[static_cast<std::size_t>(c)].size() /
                                                  shards_per_class[g]);
        }
    }
    if (shard_size == 0 || shard_size == SIZE_MAX)
        throw ConfigError("partition_multimodal: not enough data for the requested shards");

    PartitionResult result;
    std::size_t allocated = 0;
    std::uint32_t next_id = 0;
    for (int g = 0; g < 2; ++g) {
        std::vector<std::vector<std::size_t>> shards;
        for (int c : *plan[g].classes) {
            auto& pool = by_class[static_cast<std::size_t>(c)];
            rng.shuffle(pool);
            auto cut = cut_shards(pool, shards_per_class[g], shard_size);
            for (auto& s : cut) shards.push_back(std::move(s));
        }
        rng.shuffle(shards);
        for (std::size_t i = 0; i < plan[g].n_clients; ++i, ++next_id) {
            ClientData client;
            client.id = next_id;
            client.group = plan[g].tag;
            std::vector<std::size_t> pool;
            for (std::size_t k = 0; k < z; ++k) {
                const auto& shard = shards[i * z + k];
                pool.insert(pool.end(), shard.begin(), shard.end());
            }
            allocated += pool.size();
            auto [train, test] = local_split(pool, data.labels, test_fraction, rng,
                                             &client.warnings);
            client.train = std::move(train);
            client.test = std::move(test);
            result.clients.push_back(std::move(client));
        }
    }
    result.discarded = data.size() - allocated;
    return result;
}

}  // namespace waffle

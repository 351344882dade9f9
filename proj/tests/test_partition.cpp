#include <doctest.h>

#include <map>
#include <set>

#include "test_util.hpp"
#include "waffle/data.hpp"
#include "waffle/error.hpp"
#include "waffle/partition.hpp"

using namespace waffle;

namespace {

LabeledDataset toy_dataset(std::size_t classes, std::size_t per_class) {
    LabeledDataset ds;
    ds.num_classes = classes;
    ds.channels = ds.height = 1;
    ds.width = 4;
    ds.features = DenseMatrix(classes * per_class, 4);
    ds.labels.resize(classes * per_class);
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        ds.labels[i] = static_cast<int>(i % classes);
        ds.features.at(i, 0) = static_cast<double>(i);
    }
    return ds;
}

std::set<std::size_t> all_indices(const ClientData& c) {
    std::set<std::size_t> s(c.train.begin(), c.train.end());
    s.insert(c.test.begin(), c.test.end());
    return s;
}

std::set<int> client_classes(const ClientData& c, const LabeledDataset& ds) {
    std::set<int> s;
    for (std::size_t i : c.train) s.insert(ds.labels[i]);
    for (std::size_t i : c.test) s.insert(ds.labels[i]);
    return s;
}

}  // namespace

TEST_CASE("unimodal partition shard arithmetic on the toy dataset") {
    const LabeledDataset ds = toy_dataset(10, 100);
    const PartitionResult part = partition_unimodal(ds, 10, 2, 0.2, 5);
    REQUIRE(part.clients.size() == 10);
    // 20 shards of 50: every client holds exactly 100 examples from <= 2 classes.
    for (const ClientData& c : part.clients) {
        CHECK(c.size() == 100);
        CHECK(client_classes(c, ds).size() <= 2);
        CHECK(c.train.size() == 80);
        CHECK(c.test.size() == 20);
    }
    CHECK(part.discarded == 0);
}

TEST_CASE("unimodal single client holds everything") {
    const LabeledDataset ds = toy_dataset(4, 12);
    const PartitionResult part = partition_unimodal(ds, 1, 4, 0.25, 7);
    REQUIRE(part.clients.size() == 1);
    CHECK(part.clients[0].size() == ds.size());
}

TEST_CASE("unimodal Z=1 clients are single-class") {
    const LabeledDataset ds = toy_dataset(5, 40);
    const PartitionResult part = partition_unimodal(ds, 10, 1, 0.2, 11);
    for (const ClientData& c : part.clients) CHECK(client_classes(c, ds).size() == 1);
}

TEST_CASE("unimodal partition rejects infeasible arithmetic") {
    const LabeledDataset ds = toy_dataset(10, 100);
    CHECK_THROWS_AS(partition_unimodal(ds, 7, 3, 0.2, 1), ConfigError);  // 21 % 10 != 0
    const LabeledDataset tiny = toy_dataset(10, 1);
    CHECK_THROWS_AS(partition_unimodal(tiny, 10, 2, 0.2, 1), ConfigError);  // shards of 0
}

TEST_CASE("no example lands in two clients and partitions are deterministic") {
    const LabeledDataset ds = toy_dataset(10, 60);
    const PartitionResult a = partition_unimodal(ds, 20, 3, 0.2, 42);
    std::set<std::size_t> seen;
    for (const ClientData& c : a.clients)
        for (std::size_t idx : all_indices(c)) {
            CHECK(seen.count(idx) == 0);
            seen.insert(idx);
        }
    const PartitionResult b = partition_unimodal(ds, 20, 3, 0.2, 42);
    for (std::size_t i = 0; i < a.clients.size(); ++i) {
        CHECK(a.clients[i].train == b.clients[i].train);
        CHECK(a.clients[i].test == b.clients[i].test);
    }
    const PartitionResult c = partition_unimodal(ds, 20, 3, 0.2, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.clients.size(); ++i)
        any_diff = any_diff || a.clients[i].train != c.clients[i].train;
    CHECK(any_diff);
}

TEST_CASE("multimodal partition with the mnist-style group preset") {
    // Odd digits to 100 clients, even digits to 20; Z=2 with equal shards.
    LabeledDataset ds = toy_dataset(10, 840);
    GroupSpec groups = group_preset("mnist");
    const PartitionResult part = partition_multimodal(ds, groups, 2, 0.2, 9);
    REQUIRE(part.clients.size() == 120);

    const std::set<int> majority(groups.majority_classes.begin(),
                                 groups.majority_classes.end());
    const std::set<int> minority(groups.minority_classes.begin(),
                                 groups.minority_classes.end());
    // Shard arithmetic: odd classes need 100*2/5 = 40 shards (840/40 = 21 each),
    // even classes need 8 (840/8 = 105) -> equalized shard size is 21.
    std::size_t n_major = 0, n_minor = 0;
    for (const ClientData& c : part.clients) {
        CHECK(c.size() == 42);
        const auto classes = client_classes(c, ds);
        CHECK(classes.size() <= 2);
        if (c.group == GroupTag::majority) {
            ++n_major;
            for (int cls : classes) CHECK(majority.count(cls) == 1);
        } else if (c.group == GroupTag::minority) {
            ++n_minor;
            for (int cls : classes) CHECK(minority.count(cls) == 1);
        }
    }
    CHECK(n_major == 100);
    CHECK(n_minor == 20);

    // Retained minority data = 20 clients * Z * shard size; surplus discarded.
    std::size_t minority_examples = 0;
    for (const ClientData& c : part.clients)
        if (c.group == GroupTag::minority) minority_examples += c.size();
    CHECK(minority_examples == 20 * 2 * 21);
    CHECK(part.discarded == ds.size() - 100 * 42 - 20 * 42);
}

TEST_CASE("multimodal symmetric groups give equal-size clients") {
    LabeledDataset ds = toy_dataset(4, 120);
    GroupSpec groups;
    groups.majority_classes = {0, 1};
    groups.minority_classes = {2, 3};
    groups.n_majority = 6;
    groups.n_minority = 6;
    const PartitionResult part = partition_multimodal(ds, groups, 2, 0.25, 3);
    REQUIRE(part.clients.size() == 12);
    for (const ClientData& c : part.clients) CHECK(c.size() == part.clients[0].size());
}

TEST_CASE("multimodal rejects overlapping groups") {
    LabeledDataset ds = toy_dataset(4, 40);
    GroupSpec groups;
    groups.majority_classes = {0, 1};
    groups.minority_classes = {1, 2};
    groups.n_majority = 2;
    groups.n_minority = 2;
    CHECK_THROWS_AS(partition_multimodal(ds, groups, 1, 0.2, 1), ConfigError);
}

TEST_CASE("local_split basic 80/20") {
    LabeledDataset ds = toy_dataset(2, 50);
    std::vector<std::size_t> pool(100);
    for (std::size_t i = 0; i < 100; ++i) pool[i] = i;
    RngStream rng(1, 0, 1);
    auto [train, test] = local_split(pool, ds.labels, 0.2, rng, nullptr);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);
    std::set<std::size_t> overlap(train.begin(), train.end());
    for (std::size_t t : test) CHECK(overlap.count(t) == 0);
}

TEST_CASE("local_split stratifies evenly split classes") {
    LabeledDataset ds = toy_dataset(2, 50);  // labels alternate 0,1
    std::vector<std::size_t> pool(100);
    for (std::size_t i = 0; i < 100; ++i) pool[i] = i;
    RngStream rng(2, 0, 1);
    auto [train, test] = local_split(pool, ds.labels, 0.2, rng, nullptr);
    std::size_t zeros = 0;
    for (std::size_t t : test) zeros += ds.labels[t] == 0 ? 1 : 0;
    CHECK(test.size() == 20);
    CHECK(zeros == 10);
}

TEST_CASE("local_split conserves the pool as a multiset") {
    LabeledDataset ds = toy_dataset(3, 21);
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < ds.size(); i += 2) pool.push_back(i);
    RngStream rng(3, 0, 1);
    auto [train, test] = local_split(pool, ds.labels, 0.3, rng, nullptr);
    std::multiset<std::size_t> combined(train.begin(), train.end());
    combined.insert(test.begin(), test.end());
    CHECK(combined == std::multiset<std::size_t>(pool.begin(), pool.end()));
}

TEST_CASE("local_split falls back to unstratified with a warning") {
    LabeledDataset ds = toy_dataset(5, 2);  // labels cycle 0..4 twice
    RngStream rng(4, 0, 1);
    std::vector<std::string> warnings;
    // Class 2 appears exactly once in this pool, so it cannot be stratified.
    const std::vector<std::size_t> lonely{0, 5, 1, 6, 2};
    auto [train, test] = local_split(lonely, ds.labels, 0.3, rng, &warnings);
    CHECK(train.size() + test.size() == lonely.size());
    CHECK(!test.empty());
    CHECK(!warnings.empty());
}

TEST_CASE("local_split contract errors") {
    LabeledDataset ds = toy_dataset(2, 2);
    RngStream rng(5, 0, 1);
    CHECK_THROWS_AS(local_split({}, ds.labels, 0.2, rng, nullptr), ContractError);
    CHECK_THROWS_AS(local_split({0}, ds.labels, 1.5, rng, nullptr), ContractError);
}

TEST_CASE("group presets expose the documented class maps") {
    const GroupSpec mnist = group_preset("mnist");
    CHECK(mnist.majority_classes == std::vector<int>{1, 3, 5, 7, 9});
    CHECK(mnist.n_majority == 100);
    CHECK(mnist.n_minority == 20);
    const GroupSpec fmnist = group_preset("fmnist");
    CHECK(fmnist.n_majority == 90);
    const GroupSpec cifar = group_preset("cifar10");
    CHECK(cifar.majority_classes.size() == 6);
    CHECK(cifar.minority_classes.size() == 4);
    CHECK_THROWS_AS(group_preset("synthetic"), ConfigError);
}

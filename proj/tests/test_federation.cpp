#include <doctest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "waffle/error.hpp"
#include "waffle/federation.hpp"

using namespace waffle;
using testutil::max_abs_diff;

namespace {

struct Fixture {
    LabeledDataset data;
    PartitionResult partition;
    ModelConfig model;
    RoundConfig fed;
    IbpSettings ibp;

    explicit Fixture(Algorithm alg, std::size_t clients = 4, std::size_t per_class = 60) {
        data = synth_dataset(4, per_class, 8, 11, 4.0);
        partition = partition_unimodal(data, clients, 4, 0.25, 11);
        model = ModelConfig::synth_mlp(8, 10, 4, 6);
        fed.algorithm = alg;
        fed.rounds = 3;
        fed.fraction = 0.5;
        fed.local_epochs = 2;
        fed.batch_size = 10;
        fed.lr = 0.05;
        fed.mu = 1.0;
        fed.seed = 21;
        ibp.alpha = 6.0;
    }
};

std::vector<std::uint8_t> state_bytes(const GlobalState& s) {
    return serialize_update(s.params, 0, s.round);
}

}  // namespace

TEST_CASE("zero local epochs return both states unchanged") {
    Fixture fx(Algorithm::waffle);
    fx.fed.local_epochs = 0;
    const GlobalState globals = init_global_state(fx.model, Algorithm::waffle, 1);
    const auto var = ClientVariationalState::init(fx.model, fx.ibp.alpha);
    const auto [after, var_after] = waffle_client_update(globals, var, fx.data,
                                                         fx.partition.clients[0], fx.model,
                                                         fx.fed, fx.ibp);
    CHECK(state_bytes(after) == state_bytes(globals));
    CHECK(var_after.by_layer.at(0).logit_pi.data == var.by_layer.at(0).logit_pi.data);

    const GlobalState plain = init_global_state(fx.model, Algorithm::fedavg, 1);
    const GlobalState plain_after =
        fedavg_client_update(plain, fx.data, fx.partition.clients[0], fx.model, fx.fed);
    CHECK(state_bytes(plain_after) == state_bytes(plain));
}

TEST_CASE("client updates reject empty datasets") {
    Fixture fx(Algorithm::fedavg);
    ClientData empty;
    empty.id = 0;
    const GlobalState globals = init_global_state(fx.model, Algorithm::fedavg, 1);
    CHECK_THROWS_AS(fedavg_client_update(globals, fx.data, empty, fx.model, fx.fed), ConfigError);
}

TEST_CASE("aggregate_mean is idempotent on identical updates") {
    Fixture fx(Algorithm::fedavg);
    const GlobalState g = init_global_state(fx.model, Algorithm::fedavg, 2);
    const FactorDictionary out = aggregate_mean({g.params, g.params, g.params},
                                                {1.0, 1.0, 1.0});
    CHECK(max_abs_diff(out.layers[0].w, g.params.layers[0].w) <= 1e-15);
}

TEST_CASE("aggregate_mean uniform weights give the midpoint") {
    Fixture fx(Algorithm::fedavg);
    const GlobalState a = init_global_state(fx.model, Algorithm::fedavg, 3);
    const GlobalState b = init_global_state(fx.model, Algorithm::fedavg, 4);
    const FactorDictionary mid = aggregate_mean({a.params, b.params}, {0.5, 0.5});
    for (std::size_t i = 0; i < mid.layers[0].w.data.size(); ++i)
        CHECK(mid.layers[0].w.data[i] ==
              doctest::Approx(0.5 * (a.params.layers[0].w.data[i] +
                                     b.params.layers[0].w.data[i]))
                  .epsilon(1e-15));
}

TEST_CASE("aggregate_mean matches a scalar weighted-mean oracle") {
    Fixture fx(Algorithm::waffle);
    const GlobalState a = init_global_state(fx.model, Algorithm::waffle, 5);
    const GlobalState b = init_global_state(fx.model, Algorithm::waffle, 6);
    const FactorDictionary out = aggregate_mean({a.params, b.params}, {0.25, 0.75});
    for (std::size_t i = 0; i < out.layers[0].wa.data.size(); ++i) {
        const double expect =
            0.25 * a.params.layers[0].wa.data[i] + 0.75 * b.params.layers[0].wa.data[i];
        CHECK(std::abs(out.layers[0].wa.data[i] - expect) <= 1e-12);
    }
}

TEST_CASE("aggregate_mean rejects mismatched shapes") {
    Fixture fx(Algorithm::fedavg);
    const GlobalState a = init_global_state(fx.model, Algorithm::fedavg, 7);
    ModelConfig other = ModelConfig::synth_mlp(8, 11, 4, 6);
    const GlobalState b = init_global_state(other, Algorithm::fedavg, 7);
    CHECK_THROWS_AS(aggregate_mean({a.params, b.params}, {0.5, 0.5}), ConsistencyError);
}

TEST_CASE("fedprox with zero mu matches fedavg bit for bit") {
    Fixture fx(Algorithm::fedprox);
    fx.fed.mu = 0.0;
    const GlobalState globals = init_global_state(fx.model, Algorithm::fedprox, 8);
    const GlobalState a =
        fedprox_client_update(globals, fx.data, fx.partition.clients[1], fx.model, fx.fed);
    const GlobalState b =
        fedavg_client_update(globals, fx.data, fx.partition.clients[1], fx.model, fx.fed);
    CHECK(state_bytes(a) == state_bytes(b));
}

TEST_CASE("fedprox trajectory deviation equals eta*mu*(theta1 - theta_start)") {
    // Both trajectories share theta_1 (the proximal gradient vanishes at the
    // snapshot), so after the second step they differ by exactly
    // eta * mu * (theta_1 - theta_0).
    Fixture fx(Algorithm::fedprox);
    fx.fed.local_epochs = 1;
    fx.fed.mu = 0.8;
    const ClientData& client = fx.partition.clients[0];
    // Two equal batches.
    Fixture half = fx;
    half.fed.batch_size = client.train.size() / 2 + (client.train.size() % 2);

    const GlobalState globals = init_global_state(fx.model, Algorithm::fedprox, 9);
    RoundConfig one_step = half.fed;
    one_step.batch_size = client.train.size();  // single full batch -> one step
    RoundConfig cfg_avg = one_step;
    cfg_avg.mu = 0.0;

    const GlobalState avg1 =
        fedavg_client_update(globals, fx.data, client, fx.model, one_step);
    const GlobalState prox1 =
        fedprox_client_update(globals, fx.data, client, fx.model, one_step);
    CHECK(max_abs_diff(avg1.params.layers[0].w, prox1.params.layers[0].w) <= 1e-15);

    // Two half batches: trajectories share step one, split at step two.
    const GlobalState avg2 =
        fedavg_client_update(globals, fx.data, client, fx.model, half.fed);
    RoundConfig prox_cfg = half.fed;
    const GlobalState prox2 =
        fedprox_client_update(globals, fx.data, client, fx.model, prox_cfg);

    // Reconstruct the shared theta_1 by replaying the first half-batch step
    // on its own (the shuffle is seed-deterministic and identical across all
    // runs above, and a single batch is order-invariant).
    std::vector<std::size_t> order = client.train;
    RngStream shuffle_rng(prox_cfg.seed, globals.round + 1, client.id);
    shuffle_rng.shuffle(order);
    const std::vector<std::size_t> first_half(order.begin(),
                                              order.begin() + static_cast<std::ptrdiff_t>(
                                                                  half.fed.batch_size));
    ClientData first;
    first.id = client.id;
    first.train = first_half;
    RoundConfig single = prox_cfg;
    single.batch_size = first_half.size();
    const GlobalState theta1 =
        fedavg_client_update(globals, fx.data, first, fx.model, single);

    for (std::size_t layer = 0; layer < avg2.params.layers.size(); ++layer) {
        const DenseMatrix& dev_a = avg2.params.layers[layer].w;
        const DenseMatrix& dev_p = prox2.params.layers[layer].w;
        const DenseMatrix& t1 = theta1.params.layers[layer].w;
        const DenseMatrix& t0 = globals.params.layers[layer].w;
        for (std::size_t i = 0; i < dev_a.data.size(); ++i) {
            const double dev = dev_a.data[i] - dev_p.data[i];
            const double expect = prox_cfg.lr * prox_cfg.mu * (t1.data[i] - t0.data[i]);
            CHECK(std::abs(dev - expect) <= 1e-9);
        }
    }
}

TEST_CASE("huge mu keeps fedprox pinned to the snapshot") {
    // Stable step regime: eta*mu = 1, many steps. FedAvg drifts linearly
    // while the proximal pull keeps FedProx within one step of the snapshot.
    Fixture fx(Algorithm::fedprox, 2, 120);
    fx.fed.local_epochs = 12;
    fx.fed.batch_size = 12;
    fx.fed.lr = 1e-6;
    fx.fed.mu = 1e6;
    const ClientData& client = fx.partition.clients[0];
    const GlobalState globals = init_global_state(fx.model, Algorithm::fedprox, 10);

    const GlobalState prox =
        fedprox_client_update(globals, fx.data, client, fx.model, fx.fed);
    RoundConfig avg_cfg = fx.fed;
    avg_cfg.mu = 0.0;
    const GlobalState avg = fedavg_client_update(globals, fx.data, client, fx.model, avg_cfg);

    auto l2 = [](const FactorDictionary& a, const FactorDictionary& b) {
        double acc = 0.0;
        for (std::size_t l = 0; l < a.layers.size(); ++l)
            for (std::size_t i = 0; i < a.layers[l].w.data.size(); ++i) {
                const double d = a.layers[l].w.data[i] - b.layers[l].w.data[i];
                acc += d * d;
            }
        return std::sqrt(acc);
    };
    const double moved_prox = l2(prox.params, globals.params);
    const double moved_avg = l2(avg.params, globals.params);
    CHECK(moved_prox < moved_avg / 100.0);
}

TEST_CASE("single-client federation equals centralized training") {
    Fixture fx(Algorithm::fedavg, 1, 40);
    fx.partition = partition_unimodal(fx.data, 1, 4, 0.25, 11);
    fx.fed.rounds = 1;
    fx.fed.fraction = 1.0;
    fx.fed.local_epochs = 3;
    RunOptions opts;
    opts.eval_every = 0;
    const RunResult run =
        run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, opts);

    // Centralized oracle: one client update from the same initial state,
    // quantized through the wire codec exactly like live traffic.
    const GlobalState init = init_global_state(fx.model, Algorithm::fedavg, fx.fed.seed);
    const GlobalState direct =
        fedavg_client_update(init, fx.data, fx.partition.clients[0], fx.model, fx.fed);
    const auto bytes = serialize_update(direct.params, 0, 1);
    const UpdateMessage msg = deserialize_update(bytes, fx.model, Algorithm::fedavg);
    CHECK(state_bytes(run.state) == serialize_update(msg.params, 0, 1));
}

TEST_CASE("run_training with zero rounds returns the initial state") {
    Fixture fx(Algorithm::fedavg);
    fx.fed.rounds = 0;
    const RunResult run = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, {});
    CHECK(run.history.rounds.empty());
    CHECK(state_bytes(run.state) ==
          state_bytes(init_global_state(fx.model, Algorithm::fedavg, fx.fed.seed)));
}

TEST_CASE("client sampling draws the exact count without replacement") {
    Fixture fx(Algorithm::fedavg, 8, 80);
    fx.partition = partition_unimodal(fx.data, 8, 4, 0.25, 11);
    fx.fed.fraction = 0.25;  // ceil(0.25*8) = 2
    fx.fed.rounds = 6;
    RunOptions opts;
    opts.eval_every = 0;
    const RunResult run = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, opts);
    for (const RoundRecord& rec : run.history.rounds) {
        CHECK(rec.selected.size() == 2);
        const std::set<std::uint32_t> unique(rec.selected.begin(), rec.selected.end());
        CHECK(unique.size() == rec.selected.size());
        for (std::uint32_t id : rec.selected) CHECK(id < 8);
    }
}

TEST_CASE("scheduling order and thread count do not change the result") {
    for (Algorithm alg : {Algorithm::waffle, Algorithm::fedavg}) {
        Fixture fx(alg);
        RunOptions natural;
        natural.eval_every = 0;
        natural.threads = 1;
        RunOptions reversed = natural;
        reversed.reverse_execution = true;
        RunOptions threaded = natural;
        threaded.threads = 2;

        const RunResult a = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, natural);
        const RunResult b = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, reversed);
        const RunResult c = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, threaded);
        CHECK(state_bytes(a.state) == state_bytes(b.state));
        CHECK(state_bytes(a.state) == state_bytes(c.state));
    }
}

TEST_CASE("repeated runs are bit-identical") {
    Fixture fx(Algorithm::waffle);
    RunOptions opts;
    opts.eval_every = 0;
    const RunResult a = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, opts);
    const RunResult b = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, opts);
    CHECK(state_bytes(a.state) == state_bytes(b.state));
}

TEST_CASE("live traffic carries no variational field in any round") {
    Fixture fx(Algorithm::waffle);
    fx.fed.rounds = 5;
    const WireSchema schema = WireSchema::for_model(fx.model, Algorithm::waffle);
    std::set<std::string> whitelist;
    for (const auto& e : schema.fields) whitelist.insert(e.name);

    std::size_t messages = 0;
    RunOptions opts;
    opts.eval_every = 0;
    opts.traffic_observer = [&](std::uint32_t, std::uint32_t,
                                const std::vector<std::uint8_t>& bytes) {
        ++messages;
        for (const WireField& f : list_fields(bytes)) {
            CHECK(whitelist.count(f.name) == 1);
            CHECK(f.name.find("logit_pi") == std::string::npos);
            CHECK(f.name.find("raw_c") == std::string::npos);
            CHECK(f.name.find("raw_d") == std::string::npos);
        }
    };
    run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, opts);
    CHECK(messages == 5 * 2);  // ceil(0.5*4) clients per round
}

TEST_CASE("waffle varstates stay with their own clients") {
    Fixture fx(Algorithm::waffle);
    fx.fed.rounds = 4;
    RunOptions opts;
    opts.eval_every = 0;
    const RunResult run = run_training(fx.fed, fx.data, fx.partition, fx.model, fx.ibp, opts);
    std::set<std::uint32_t> ever_selected;
    for (const RoundRecord& rec : run.history.rounds)
        ever_selected.insert(rec.selected.begin(), rec.selected.end());
    std::set<std::uint32_t> with_state;
    for (const auto& [id, vs] : run.varstates) with_state.insert(id);
    CHECK(with_state == ever_selected);
}

TEST_CASE("evaluation is deterministic and near chance for an untrained model") {
    Fixture fx(Algorithm::fedavg, 2, 200);
    fx.partition = partition_unimodal(fx.data, 2, 4, 0.25, 11);
    const GlobalState globals = init_global_state(fx.model, Algorithm::fedavg, 31);
    const double a =
        evaluate_client(globals, nullptr, fx.data, fx.partition.clients[0], fx.model, fx.fed,
                        fx.ibp);
    const double b =
        evaluate_client(globals, nullptr, fx.data, fx.partition.clients[0], fx.model, fx.fed,
                        fx.ibp);
    CHECK(a == b);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    // Random init on 4 balanced classes: near chance with generous slack.
    CHECK(a < 0.6);
}

TEST_CASE("all-zero hardened scores give the constant-logit predictor") {
    Fixture fx(Algorithm::waffle);
    const GlobalState globals = init_global_state(fx.model, Algorithm::waffle, 32);
    ClientVariationalState var = ClientVariationalState::init(fx.model, fx.ibp.alpha);
    for (auto& v : var.by_layer.at(0).logit_pi.data) v = -30.0;  // pi ~ 0 -> b = 0

    const ClientData& client = fx.partition.clients[0];
    const double acc =
        evaluate_client(globals, &var, fx.data, client, fx.model, fx.fed, fx.ibp);
    // Logits are identically zero, so argmax picks class 0 everywhere.
    std::size_t zeros = 0;
    for (std::size_t idx : client.test) zeros += fx.data.labels[idx] == 0 ? 1 : 0;
    CHECK(acc == doctest::Approx(static_cast<double>(zeros) /
                                 static_cast<double>(client.test.size())));
}

TEST_CASE("evaluate_client requires a non-empty test set") {
    Fixture fx(Algorithm::fedavg);
    ClientData no_test;
    no_test.id = 3;
    no_test.train = fx.partition.clients[0].train;
    const GlobalState globals = init_global_state(fx.model, Algorithm::fedavg, 33);
    CHECK_THROWS_AS(
        evaluate_client(globals, nullptr, fx.data, no_test, fx.model, fx.fed, fx.ibp),
        ConfigError);
}

TEST_CASE("round config validation") {
    RoundConfig cfg;
    cfg.fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(4), ConfigError);
    cfg.fraction = 0.5;
    cfg.client_weights = {0.5, 0.5};
    CHECK_THROWS_AS(cfg.validate(4), ConfigError);  // wrong length
    cfg.client_weights = {0.25, 0.25, 0.25, 0.25};
    cfg.validate(4);
}

#include "waffle/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <thread>

#include "waffle/error.hpp"

namespace waffle {

void RoundConfig::validate(std::size_t n_clients) const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("fed.fraction must be in (0,1]");
    if (batch_size < 1) throw ConfigError("fed.batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("fed.lr must be positive");
    if (mu < 0.0) throw ConfigError("fed.mu must be >= 0");
    if (!client_weights.empty()) {
        if (client_weights.size() != n_clients)
            throw ConfigError("fed.client_weights must have one entry per client");
        double sum = 0.0;
        for (double p : client_weights) {
            if (p < 0.0) throw ConfigError("fed.client_weights must be >= 0");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("fed.client_weights must sum to 1");
    }
}

GlobalState init_global_state(const ModelConfig& model, Algorithm algorithm, std::uint64_t seed) {
    RngStream rng(seed, 0, kInitStream);
    GlobalState state;
    state.params = init_dictionary(model, algorithm, rng);
    state.round = 0;
    return state;
}

namespace {

std::vector<int> gather_labels(const LabeledDataset& data, const std::vector<std::size_t>& rows) {
    std::vector<int> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = data.labels[rows[i]];
    return out;
}

// Applies one SGD step to every staged dictionary tensor.
void step_dictionary(FactorDictionary& dict, Tape& tape, const StagedParams& staged, double lr) {
    for (std::size_t i = 0; i < dict.layers.size(); ++i) {
        LayerParams& p = dict.layers[i];
        const StagedParams::Layer& s = staged.layers[i];
        if (p.factorized) {
            sgd_step(p.wa, tape.grad(s.wa), lr);
            sgd_step(p.wb, tape.grad(s.wb), lr);
            sgd_step(p.r, tape.grad(s.r), lr);
        } else {
            sgd_step(p.w, tape.grad(s.w), lr);
        }
    }
}

}  // namespace

std::pair<GlobalState, ClientVariationalState> waffle_client_update(
    const GlobalState& globals, const ClientVariationalState& varstate,
    const LabeledDataset& data, const ClientData& client, const ModelConfig& model,
    const RoundConfig& cfg, const IbpSettings& ibp) {
    if (client.train.empty()) throw ConfigError("waffle_client_update: empty client dataset");
    GlobalState state = globals;
    ClientVariationalState vs = varstate;

    const std::uint32_t round = globals.round + 1;
    RngStream rng(cfg.seed, round, client.id);
    const std::size_t n = client.train.size();
    PriorConfig prior{ibp.alpha, 1};
    for (std::size_t i : model.factorized_layers())
        prior.truncation = std::max(prior.truncation, model.layers[i].num_factors);

    std::vector<std::size_t> order = client.train;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(stop));
            const DenseMatrix x = gather_rows(data.features, batch);
            const std::vector<int> y = gather_labels(data, batch);

            Tape tape;
            StagedParams sp = stage_params(tape, state.params);
            StagedVarState sv = stage_varstate(tape, vs);
            const double kl_scale =
                static_cast<double>(batch.size()) / static_cast<double>(n);
            ElboNodes elbo =
                build_elbo(tape, model, sp, sv, x, y, prior, ibp.relax, kl_scale, rng);
            tape.backward(elbo.loss);

            step_dictionary(state.params, tape, sp, cfg.lr);
            for (auto& [layer, params] : vs.by_layer) {
                const StagedVarLayer& nodes = sv.by_layer.at(layer);
                sgd_step(params.logit_pi, tape.grad(nodes.logit_pi), cfg.lr);
                sgd_step(params.raw_c, tape.grad(nodes.raw_c), cfg.lr);
                sgd_step(params.raw_d, tape.grad(nodes.raw_d), cfg.lr);
            }
        }
    }
    return {std::move(state), std::move(vs)};
}

namespace {

GlobalState sgd_client_update(const GlobalState& globals, const LabeledDataset& data,
                              const ClientData& client, const ModelConfig& model,
                              const RoundConfig& cfg, double mu) {
    if (client.train.empty()) throw ConfigError("client_update: empty client dataset");
    GlobalState state = globals;
    const std::uint32_t round = globals.round + 1;
    RngStream rng(cfg.seed, round, client.id);
    const std::size_t n = client.train.size();

    std::vector<std::size_t> order = client.train;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(stop));
            const DenseMatrix x = gather_rows(data.features, batch);
            const std::vector<int> y = gather_labels(data, batch);

            Tape tape;
            StagedParams sp = stage_params(tape, state.params);
            Tape::Id logits = forward_pass(tape, model, sp, {}, tape.leaf(x));
            Tape::Id loss = tape.softmax_cross_entropy(logits, y);
            if (mu > 0.0) {
                // (mu/2) * ||theta - theta_round_start||^2 against the received snapshot.
                Tape::Id prox = 0;
                bool have = false;
                for (std::size_t i = 0; i < sp.layers.size(); ++i) {
                    const LayerParams& start_params = globals.params.layers[i];
                    auto add_term = [&](Tape::Id p, const DenseMatrix& s) {
                        Tape::Id d = tape.sub(p, tape.leaf(s));
                        Tape::Id term = tape.sum(tape.mul(d, d));
                        prox = have ? tape.add(prox, term) : term;
                        have = true;
                    };
                    if (sp.layers[i].factorized) {
                        add_term(sp.layers[i].wa, start_params.wa);
                        add_term(sp.layers[i].wb, start_params.wb);
                        add_term(sp.layers[i].r, start_params.r);
                    } else {
                        add_term(sp.layers[i].w, start_params.w);
                    }
                }
                loss = tape.add(loss, tape.scale(prox, 0.5 * mu));
            }
            tape.backward(loss);
            step_dictionary(state.params, tape, sp, cfg.lr);
        }
    }
    return state;
}

}  // namespace

GlobalState fedavg_client_update(const GlobalState& globals, const LabeledDataset& data,
                                 const ClientData& client, const ModelConfig& model,
                                 const RoundConfig& cfg) {
    return sgd_client_update(globals, data, client, model, cfg, 0.0);
}

GlobalState fedprox_client_update(const GlobalState& globals, const LabeledDataset& data,
                                  const ClientData& client, const ModelConfig& model,
                                  const RoundConfig& cfg) {
    return sgd_client_update(globals, data, client, model, cfg, cfg.mu);
}

FactorDictionary aggregate_mean(const std::vector<FactorDictionary>& updates,
                                const std::vector<double>& weights) {
    if (updates.empty()) throw ContractError("aggregate_mean: no updates");
    if (weights.size() != updates.size())
        throw ContractError("aggregate_mean: one weight per update required");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ContractError("aggregate_mean: negative weight");
        wsum += w;
    }
    if (!(wsum > 0.0)) throw ContractError("aggregate_mean: weights sum to zero");

    for (const auto& u : updates)
        if (!u.same_shapes(updates.front()))
            throw ConsistencyError("aggregate_mean: update shape mismatch");

    FactorDictionary out = updates.front();
    auto zero = [](DenseMatrix& m) { std::fill(m.data.begin(), m.data.end(), 0.0); };
    for (LayerParams& p : out.layers) {
        zero(p.w);
        zero(p.wa);
        zero(p.wb);
        zero(p.r);
    }
    auto axpy = [](DenseMatrix& acc, const DenseMatrix& m, double w) {
        for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += w * m.data[i];
    };
    for (std::size_t k = 0; k < updates.size(); ++k) {
        const double w = weights[k] / wsum;
        for (std::size_t i = 0; i < out.layers.size(); ++i) {
            axpy(out.layers[i].w, updates[k].layers[i].w, w);
            axpy(out.layers[i].wa, updates[k].layers[i].wa, w);
            axpy(out.layers[i].wb, updates[k].layers[i].wb, w);
            axpy(out.layers[i].r, updates[k].layers[i].r, w);
        }
    }
    for (const LayerParams& p : out.layers) {
        ensure_finite(p.w, "aggregate_mean");
        ensure_finite(p.wa, "aggregate_mean");
        ensure_finite(p.wb, "aggregate_mean");
        ensure_finite(p.r, "aggregate_mean");
    }
    return out;
}

namespace {

FactorScores prior_sample_scores(const ModelConfig& model, const IbpSettings& ibp,
                                 std::uint64_t seed, std::uint32_t client_id) {
    RngStream rng(seed, client_id, kEvalStream);
    FactorScores scores;
    for (std::size_t i : model.factorized_layers()) {
        const std::size_t f = model.layers[i].num_factors;
        DenseMatrix b(1, f);
        double pi = 1.0;
        for (std::size_t k = 0; k < f; ++k) {
            // v ~ Beta(alpha,1) by inverse CDF, pi_k = prod v, b_k ~ Bern(pi_k).
            pi *= std::pow(rng.uniform(), 1.0 / ibp.alpha);
            b.data[k] = rng.uniform() < pi ? 1.0 : 0.0;
        }
        scores.by_layer[i] = std::move(b);
    }
    return scores;
}

bool dictionary_factorized(const FactorDictionary& dict) {
    for (const LayerParams& p : dict.layers)
        if (p.factorized) return true;
    return false;
}

}  // namespace

double evaluate_client(const GlobalState& globals, const ClientVariationalState* varstate,
                       const LabeledDataset& data, const ClientData& client,
                       const ModelConfig& model, const RoundConfig& cfg, const IbpSettings& ibp) {
    if (client.test.empty()) throw ConfigError("evaluate_client: empty test set");

    FactorScores scores;
    if (dictionary_factorized(globals.params)) {
        if (varstate != nullptr && !varstate->empty()) {
            scores = harden_scores(model, *varstate, ibp.relax.hard_threshold);
        } else if (ibp.unqueried == IbpSettings::UnqueriedEval::all_ones) {
            scores = FactorScores::all_ones(model);
        } else {
            scores = prior_sample_scores(model, ibp, cfg.seed, client.id);
        }
    }

    std::size_t correct = 0;
    constexpr std::size_t kChunk = 128;
    for (std::size_t start = 0; start < client.test.size(); start += kChunk) {
        const std::size_t stop = std::min(client.test.size(), start + kChunk);
        const std::vector<std::size_t> rows(client.test.begin() + static_cast<std::ptrdiff_t>(start),
                                            client.test.begin() + static_cast<std::ptrdiff_t>(stop));
        const DenseMatrix logits = forward(model, globals.params, scores,
                                           gather_rows(data.features, rows));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < logits.cols; ++j)
                if (logits.at(i, j) > logits.at(i, best)) best = j;  // ties: lowest index
            if (static_cast<int>(best) == data.labels[rows[i]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(client.test.size());
}

namespace {

std::vector<std::uint32_t> sample_clients(std::size_t n, double fraction, std::uint64_t seed,
                                          std::uint32_t round) {
    auto m = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n) - 1e-9));
    m = std::max<std::size_t>(1, std::min(m, n));
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    RngStream rng(seed, round, kServerStream);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(m);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

RunResult run_training(const RoundConfig& cfg, const LabeledDataset& data,
                       const PartitionResult& partition, const ModelConfig& model,
                       const IbpSettings& ibp, const RunOptions& options) {
    const std::size_t n = partition.clients.size();
    if (n == 0) throw ConfigError("run_training: no clients");
    cfg.validate(n);
    ibp.relax.validate();

    RunResult result;
    result.state = init_global_state(model, cfg.algorithm, cfg.seed);

    const bool is_waffle = cfg.algorithm == Algorithm::waffle;

    auto evaluate_all = [&](RoundRecord& rec) {
        rec.evaluated = true;
        rec.client_accuracy.resize(n);
        double sum = 0.0;
        double group_sum[2] = {0.0, 0.0};
        std::size_t group_count[2] = {0, 0};
        for (std::size_t i = 0; i < n; ++i) {
            const ClientData& client = partition.clients[i];
            const ClientVariationalState* vs = nullptr;
            if (is_waffle) {
                auto it = result.varstates.find(client.id);
                if (it != result.varstates.end()) vs = &it->second;
            }
            const double acc =
                evaluate_client(result.state, vs, data, client, model, cfg, ibp);
            rec.client_accuracy[i] = acc;
            sum += acc;
            if (client.group == GroupTag::majority) {
                group_sum[0] += acc;
                ++group_count[0];
            } else if (client.group == GroupTag::minority) {
                group_sum[1] += acc;
                ++group_count[1];
            }
        }
        rec.mean_accuracy = sum / static_cast<double>(n);
        if (group_count[0] > 0 && group_count[1] > 0) {
            rec.has_groups = true;
            rec.majority_accuracy = group_sum[0] / static_cast<double>(group_count[0]);
            rec.minority_accuracy = group_sum[1] / static_cast<double>(group_count[1]);
        }
    };

    for (std::uint32_t round = 1; round <= cfg.rounds; ++round) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<std::uint32_t> selected = sample_clients(n, cfg.fraction, cfg.seed, round);
        const GlobalState snapshot = result.state;  // distributed to all selected clients

        struct ClientResult {
            FactorDictionary params;
            ClientVariationalState varstate;
            std::vector<std::uint8_t> bytes;
        };
        std::vector<ClientResult> outcomes(selected.size());

        auto run_one = [&](std::size_t slot) {
            const std::uint32_t id = selected[slot];
            const ClientData& client = partition.clients[id];
            FactorDictionary update;
            ClientVariationalState new_vs;
            if (is_waffle) {
                ClientVariationalState vs;
                auto it = result.varstates.find(id);
                vs = it != result.varstates.end() ? it->second
                                                  : ClientVariationalState::init(model, ibp.alpha);
                auto [st, v] = waffle_client_update(snapshot, vs, data, client, model, cfg, ibp);
                update = std::move(st.params);
                new_vs = std::move(v);
            } else if (cfg.algorithm == Algorithm::fedavg) {
                update = fedavg_client_update(snapshot, data, client, model, cfg).params;
            } else {
                update = fedprox_client_update(snapshot, data, client, model, cfg).params;
            }
            // Everything leaving the client crosses the wire codec; the
            // decoded message is what the server aggregates.
            std::vector<std::uint8_t> bytes = serialize_update(update, client.id, round);
            UpdateMessage msg = deserialize_update(bytes, model, cfg.algorithm);
            outcomes[slot] = ClientResult{std::move(msg.params), std::move(new_vs),
                                          std::move(bytes)};
        };

        const std::size_t threads = options.threads == 0
                                        ? std::max(1u, std::thread::hardware_concurrency())
                                        : options.threads;
        if (threads > 1 && selected.size() > 1) {
            std::vector<std::future<void>> jobs;
            jobs.reserve(selected.size());
            for (std::size_t slot = 0; slot < selected.size(); ++slot)
                jobs.push_back(std::async(std::launch::async, run_one, slot));
            for (auto& j : jobs) j.get();
        } else if (options.reverse_execution) {
            for (std::size_t slot = selected.size(); slot > 0; --slot) run_one(slot - 1);
        } else {
            for (std::size_t slot = 0; slot < selected.size(); ++slot) run_one(slot);
        }

        // Observer and aggregation both walk ascending client order, so the
        // result is independent of completion order.
        if (options.traffic_observer)
            for (std::size_t slot = 0; slot < selected.size(); ++slot)
                options.traffic_observer(round, selected[slot], outcomes[slot].bytes);

        std::vector<FactorDictionary> updates;
        std::vector<double> weights;
        updates.reserve(selected.size());
        for (std::size_t slot = 0; slot < selected.size(); ++slot) {
            updates.push_back(std::move(outcomes[slot].params));
            weights.push_back(cfg.client_weights.empty()
                                  ? 1.0
                                  : cfg.client_weights[selected[slot]]);
        }
        result.state.params = aggregate_mean(updates, weights);
        result.state.round = round;
        if (is_waffle)
            for (std::size_t slot = 0; slot < selected.size(); ++slot)
                result.varstates[selected[slot]] = std::move(outcomes[slot].varstate);

        RoundRecord rec;
        rec.round = round;
        rec.selected = selected;
        if ((options.eval_every > 0 && round % options.eval_every == 0) || round == cfg.rounds)
            evaluate_all(rec);
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        if (options.on_round) options.on_round(rec);
        result.history.rounds.push_back(std::move(rec));
    }
    return result;
}

}  // namespace waffle

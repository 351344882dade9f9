#include "waffle/mia.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "waffle/error.hpp"

namespace waffle {

void ShadowConfig::validate() const {
    if (num_shadows < 1) throw ConfigError("mia.shadows must be >= 1");
    if (clients < 1) throw ConfigError("mia.clients must be >= 1");
    if (examples_per_client < 2) throw ConfigError("mia.examples_per_client too small");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("mia test fraction must be in (0,1)");
}

namespace {

LabeledDataset slice_dataset(const LabeledDataset& data, const std::vector<std::size_t>& rows) {
    LabeledDataset out;
    out.num_classes = data.num_classes;
    out.channels = data.channels;
    out.height = data.height;
    out.width = data.width;
    out.features = gather_rows(data.features, rows);
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.labels[i] = data.labels[rows[i]];
    return out;
}

FactorScores view_scores(const ModelConfig& model, const FactorDictionary& view,
                         const ShadowConfig& cfg, std::uint64_t seed) {
    bool factorized = false;
    for (const auto& l : view.layers) factorized = factorized || l.factorized;
    if (!factorized) return {};
    if (cfg.completion == ShadowConfig::ViewCompletion::all_ones)
        return FactorScores::all_ones(model);
    RngStream rng(seed, 0, kEvalStream);
    FactorScores scores;
    for (std::size_t i : model.factorized_layers()) {
        const std::size_t f = model.layers[i].num_factors;
        DenseMatrix b(1, f);
        double pi = 1.0;
        for (std::size_t k = 0; k < f; ++k) {
            pi *= std::pow(rng.uniform(), 1.0 / cfg.ibp.alpha);
            b.data[k] = rng.uniform() < pi ? 1.0 : 0.0;
        }
        scores.by_layer[i] = std::move(b);
    }
    return scores;
}

}  // namespace

MiaPlan plan_mia_split(const LabeledDataset& data, const ShadowConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t pipelines = cfg.num_shadows + 1;
    const std::size_t in_per = cfg.clients * cfg.examples_per_client;
    const std::size_t out_per = cfg.examples_per_client;
    const std::size_t classes = data.num_classes;

    // Per-class allotments keep every slice stratified.
    const std::size_t in_per_class = in_per / classes;
    const std::size_t out_per_class = out_per / classes;
    if (in_per_class == 0 || out_per_class == 0)
        throw ConfigError("plan_mia_split: pipeline pools too small for the class count");

    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < data.size(); ++i)
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    const std::size_t need = pipelines * (in_per_class + out_per_class);
    for (std::size_t c = 0; c < classes; ++c)
        if (by_class[c].size() < need)
            throw ConfigError("plan_mia_split: class " + std::to_string(c) +
                              " has too few examples for disjoint pipelines");

    RngStream rng(seed, 0, kPartitionStream);
    for (auto& pool : by_class) rng.shuffle(pool);

    MiaPlan plan;
    plan.pipeline_rows.resize(pipelines);
    plan.held_out_rows.resize(pipelines);
    std::vector<std::size_t> cursor(classes, 0);
    for (std::size_t p = 0; p < pipelines; ++p) {
        for (std::size_t c = 0; c < classes; ++c) {
            auto& pool = by_class[c];
            auto& cur = cursor[c];
            for (std::size_t k = 0; k < in_per_class; ++k)
                plan.pipeline_rows[p].push_back(pool[cur++]);
            for (std::size_t k = 0; k < out_per_class; ++k)
                plan.held_out_rows[p].push_back(pool[cur++]);
        }
    }
    return plan;
}

Pipeline train_pipeline(const LabeledDataset& data, const std::vector<std::size_t>& pool_rows,
                        const std::vector<std::size_t>& out_rows, const ShadowConfig& cfg,
                        std::uint64_t seed) {
    for (std::size_t r : pool_rows)
        for (std::size_t o : out_rows)
            if (r == o) throw ConfigError("train_pipeline: in/out rows overlap");

    Pipeline p;
    p.local = slice_dataset(data, pool_rows);
    p.held_out = slice_dataset(data, out_rows);

    const std::size_t z = cfg.z == 0 ? p.local.num_classes : cfg.z;
    p.partition = partition_unimodal(p.local, cfg.clients, z, cfg.test_fraction, seed);

    RoundConfig fed = cfg.fed;
    fed.seed = seed;
    RunOptions options;
    options.eval_every = 0;  // final-round evaluation only
    p.run = run_training(fed, p.local, p.partition, cfg.model, cfg.ibp, options);

    // Interception: the victim trains once more on the final globals and the
    // serialized update is what the adversary captures.
    p.victim = 0;
    const ClientData& victim = p.partition.clients[p.victim];
    FactorDictionary update;
    if (fed.algorithm == Algorithm::waffle) {
        ClientVariationalState vs;
        auto it = p.run.varstates.find(p.victim);
        vs = it != p.run.varstates.end() ? it->second
                                         : ClientVariationalState::init(cfg.model, cfg.ibp.alpha);
        auto [st, v] = waffle_client_update(p.run.state, vs, p.local, victim, cfg.model, fed,
                                            cfg.ibp);
        update = std::move(st.params);
    } else if (fed.algorithm == Algorithm::fedavg) {
        update = fedavg_client_update(p.run.state, p.local, victim, cfg.model, fed).params;
    } else {
        update = fedprox_client_update(p.run.state, p.local, victim, cfg.model, fed).params;
    }
    const auto bytes = serialize_update(update, p.victim, p.run.state.round + 1);
    p.view = deserialize_update(bytes, cfg.model, fed.algorithm).params;
    return p;
}

std::vector<Pipeline> train_shadows(const LabeledDataset& data, const MiaPlan& plan,
                                    const ShadowConfig& cfg, std::uint64_t seed) {
    if (plan.pipeline_rows.size() != cfg.num_shadows + 1)
        throw ConfigError("train_shadows: plan does not match shadow count");
    std::vector<Pipeline> shadows;
    for (std::size_t s = 1; s < plan.pipeline_rows.size(); ++s)
        shadows.push_back(train_pipeline(data, plan.pipeline_rows[s], plan.held_out_rows[s], cfg,
                                         seed + s));
    return shadows;
}

AttackRow featurize(const ModelConfig& model, const FactorDictionary& view,
                    const ShadowConfig& cfg, const LabeledDataset& data, std::size_t row,
                    bool member, std::uint64_t seed) {
    const FactorScores scores = view_scores(model, view, cfg, seed);
    const DenseMatrix logits = forward(model, view, scores, gather_rows(data.features, {row}));
    const DenseMatrix probs = softmax_rows(logits);
    AttackRow out;
    out.sorted_confidence.assign(probs.data.begin(), probs.data.end());
    std::sort(out.sorted_confidence.begin(), out.sorted_confidence.end(), std::greater<>());
    out.true_class = data.labels[row];
    out.member = member;
    return out;
}

namespace {

// Featurizes a whole pipeline and appends per-class balanced rows.
void append_pipeline_rows(AttackDataset& ds, const Pipeline& p, const ShadowConfig& cfg,
                          std::uint64_t seed) {
    const ClientData& victim = p.partition.clients[p.victim];
    std::map<int, std::vector<AttackRow>> in_rows, out_rows;
    for (std::size_t row : victim.train) {
        AttackRow r = featurize(cfg.model, p.view, cfg, p.local, row, true, seed);
        in_rows[r.true_class].push_back(std::move(r));
    }
    for (std::size_t row = 0; row < p.held_out.size(); ++row) {
        AttackRow r = featurize(cfg.model, p.view, cfg, p.held_out, row, false, seed);
        out_rows[r.true_class].push_back(std::move(r));
    }
    RngStream rng(seed, 1, kDataStream);
    for (auto& [cls, members] : in_rows) {
        auto it = out_rows.find(cls);
        if (it == out_rows.end()) continue;
        auto& non_members = it->second;
        rng.shuffle(members);
        rng.shuffle(non_members);
        const std::size_t k = std::min(members.size(), non_members.size());
        for (std::size_t i = 0; i < k; ++i) {
            ds.rows.push_back(std::move(members[i]));
            ds.rows.push_back(std::move(non_members[i]));
        }
    }
}

struct Logistic {
    std::vector<double> w;  // one weight per feature + bias at the back
    double predict(const std::vector<double>& x) const {
        double z = w.back();
        for (std::size_t i = 0; i < x.size(); ++i) z += w[i] * x[i];
        return 1.0 / (1.0 + std::exp(-z));
    }
};

// Full-batch gradient descent with L2 regularization; deterministic.
Logistic fit_logistic(const std::vector<const AttackRow*>& rows, std::size_t dim) {
    Logistic model;
    model.w.assign(dim + 1, 0.0);
    constexpr double kLr = 0.5;
    constexpr double kL2 = 1e-3;
    constexpr int kSteps = 600;
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    std::vector<double> grad(dim + 1);
    for (int step = 0; step < kSteps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const AttackRow* r : rows) {
            const double p = model.predict(r->sorted_confidence);
            const double err = p - (r->member ? 1.0 : 0.0);
            for (std::size_t i = 0; i < dim; ++i) grad[i] += err * r->sorted_confidence[i];
            grad[dim] += err;
        }
        for (std::size_t i = 0; i <= dim; ++i) {
            grad[i] = grad[i] * inv_n + (i < dim ? kL2 * model.w[i] : 0.0);
            model.w[i] -= kLr * grad[i];
        }
    }
    return model;
}

}  // namespace

AttackDataset build_attack_dataset(const std::vector<Pipeline>& shadows, const ShadowConfig& cfg,
                                   std::uint64_t seed) {
    if (shadows.empty()) throw ContractError("build_attack_dataset: no shadows");
    AttackDataset ds;
    ds.num_classes = cfg.model.num_classes;
    for (std::size_t s = 0; s < shadows.size(); ++s)
        append_pipeline_rows(ds, shadows[s], cfg, seed + 1 + s);
    return ds;
}

AttackReport run_attack(const AttackDataset& attack_data, const Pipeline& target,
                        const ShadowConfig& cfg, std::uint64_t seed) {
    if (attack_data.rows.empty()) throw ContractError("run_attack: empty attack dataset");
    AttackReport report;

    // Target evaluation rows, balanced per class by subsampling.
    AttackDataset eval;
    eval.num_classes = attack_data.num_classes;
    append_pipeline_rows(eval, target, cfg, seed);
    if (eval.rows.empty()) throw ContractError("run_attack: no target evaluation rows");

    const std::size_t dim = attack_data.num_classes;
    std::map<int, std::vector<const AttackRow*>> train_by_class;
    for (const AttackRow& r : attack_data.rows) train_by_class[r.true_class].push_back(&r);

    std::map<int, Logistic> per_class;
    for (const auto& [cls, rows] : train_by_class) per_class[cls] = fit_logistic(rows, dim);

    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    std::map<int, std::pair<std::size_t, std::size_t>> class_hits;  // correct, total
    for (const AttackRow& r : eval.rows) {
        auto it = per_class.find(r.true_class);
        if (it == per_class.end()) {
            report.warnings.push_back("no attack model for class " +
                                      std::to_string(r.true_class) + "; predicting non-member");
        }
        const bool predicted =
            it != per_class.end() && it->second.predict(r.sorted_confidence) > 0.5;
        if (predicted == r.member) ++correct;
        if (predicted && r.member) ++tp;
        if (predicted && !r.member) ++fp;
        if (!predicted && r.member) ++fn;
        auto& hits = class_hits[r.true_class];
        if (predicted == r.member) ++hits.first;
        ++hits.second;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(eval.rows.size());
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    report.f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    report.per_class_accuracy.assign(attack_data.num_classes, 0.0);
    for (const auto& [cls, hits] : class_hits)
        report.per_class_accuracy[static_cast<std::size_t>(cls)] =
            static_cast<double>(hits.first) / static_cast<double>(hits.second);
    return report;
}

MiaOutcome run_mia(const LabeledDataset& data, const ShadowConfig& cfg, std::uint64_t seed) {
    MiaOutcome out;
    const MiaPlan plan = plan_mia_split(data, cfg, seed);
    out.target = train_pipeline(data, plan.pipeline_rows[0], plan.held_out_rows[0], cfg, seed);
    const std::vector<Pipeline> shadows = train_shadows(data, plan, cfg, seed);
    out.attack_train = build_attack_dataset(shadows, cfg, seed);
    out.report = run_attack(out.attack_train, out.target, cfg, seed + 7919);
    return out;
}

}  // namespace waffle

#include "waffle/experiment.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "waffle/error.hpp"

namespace waffle {

namespace fs = std::filesystem;

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out << content;
    }
    fs::rename(tmp, path);
}

namespace {

std::vector<std::size_t> parse_factor_list(const ExperimentConfig& cfg) {
    std::vector<std::size_t> out;
    for (const std::string& item : cfg.get_list("ibp.factors")) {
        const long long v = std::stoll(item);
        if (v < 1) throw ConfigError("ibp.factors entries must be >= 1");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

LabeledDataset resolve_dataset(const ExperimentConfig& cfg, const std::string& preset,
                               std::uint64_t seed) {
    if (preset == "synthetic") {
        const auto classes = static_cast<std::size_t>(cfg.get_int("data.synthetic.classes", 4));
        const auto per_class =
            static_cast<std::size_t>(cfg.get_int("data.synthetic.per_class", 250));
        const auto dim = static_cast<std::size_t>(cfg.get_int("data.synthetic.dim", 16));
        const double sep = cfg.get_real("data.synthetic.separation", 6.0);
        return synth_dataset(classes, per_class, dim, seed, sep);
    }
    if (preset == "mnist" || preset == "fmnist") {
        if (!cfg.has("data.images") || !cfg.has("data.labels"))
            throw ConfigError("data.images and data.labels are required for preset " + preset);
        return load_idx(cfg.get_string("data.images", ""), cfg.get_string("data.labels", ""));
    }
    if (preset == "cifar10") {
        const auto batches = cfg.get_list("data.batches");
        if (batches.empty()) throw ConfigError("data.batches is required for preset cifar10");
        return load_cifar10_bin(batches);
    }
    throw ConfigError("unknown data.preset: " + preset);
}

std::string default_model_preset(const std::string& data_preset) {
    if (data_preset == "mnist") return "mnist-mlp";
    if (data_preset == "fmnist") return "fmnist-conv";
    if (data_preset == "cifar10") return "cifar-conv";
    return "synth-mlp";
}

}  // namespace

ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg) {
    ResolvedExperiment r;
    r.data_preset = cfg.get_string("data.preset", "synthetic");
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("fed.seed", 1));
    r.data = resolve_dataset(cfg, r.data_preset, seed);

    // Model
    const std::string model_preset =
        cfg.get_string("model.preset", default_model_preset(r.data_preset));
    std::vector<std::size_t> factors = parse_factor_list(cfg);
    if (model_preset == "synth-mlp") {
        const auto hidden = static_cast<std::size_t>(cfg.get_int("model.hidden", 32));
        const std::size_t f = factors.empty() ? 16 : factors[0];
        r.model = ModelConfig::synth_mlp(r.data.features.cols, hidden, r.data.num_classes, f);
    } else {
        r.model = ModelConfig::preset(model_preset);
        if (!factors.empty()) {
            r.model.override_factors(factors);
            r.model.validate();
        }
    }
    if (r.model.input_dim() != r.data.features.cols)
        throw ConfigError("model input width " + std::to_string(r.model.input_dim()) +
                          " does not match dataset width " +
                          std::to_string(r.data.features.cols));

    // Partition
    const std::string mode = cfg.get_string("data.partition", "unimodal");
    const auto z = static_cast<std::size_t>(cfg.get_int("data.z", 2));
    const double test_fraction = cfg.get_real("data.test_fraction", 0.2);
    if (mode == "unimodal") {
        const auto n = static_cast<std::size_t>(cfg.get_int("data.clients", 100));
        r.partition = partition_unimodal(r.data, n, z, test_fraction, seed);
        r.multimodal = false;
    } else if (mode == "multimodal") {
        r.partition = partition_multimodal(r.data, group_preset(r.data_preset), z, test_fraction,
                                           seed);
        r.multimodal = true;
    } else {
        throw ConfigError("data.partition must be unimodal or multimodal");
    }

    // Federation
    r.fed.rounds = static_cast<std::size_t>(cfg.get_int("fed.rounds", 10));
    r.fed.fraction = cfg.get_real("fed.fraction", 0.1);
    r.fed.local_epochs = static_cast<std::size_t>(cfg.get_int("fed.local_epochs", 5));
    r.fed.batch_size = static_cast<std::size_t>(cfg.get_int("fed.batch_size", 10));
    r.fed.lr = cfg.get_real("fed.lr", r.model.default_lr);
    r.fed.mu = cfg.get_real("fed.mu", 1.0);
    r.fed.algorithm = algorithm_from_string(cfg.get_string("fed.algorithm", "waffle"));
    r.fed.seed = seed;
    if (r.fed.rounds < 1) throw ConfigError("fed.rounds must be >= 1");
    if (r.fed.local_epochs < 1) throw ConfigError("fed.local_epochs must be >= 1");

    // IBP settings; alpha defaults to F (alpha/F = 1).
    double default_alpha = 1.0;
    const auto fl = r.model.factorized_layers();
    if (!fl.empty()) default_alpha = static_cast<double>(r.model.layers[fl[0]].num_factors);
    r.ibp.alpha = cfg.get_real("ibp.alpha", default_alpha);
    r.ibp.relax.temperature = cfg.get_real("ibp.temperature", 0.5);
    r.ibp.relax.hard_threshold = cfg.get_real("ibp.hard_threshold", 0.5);
    const std::string unqueried = cfg.get_string("ibp.unqueried_eval", "all_ones");
    if (unqueried == "all_ones")
        r.ibp.unqueried = IbpSettings::UnqueriedEval::all_ones;
    else if (unqueried == "prior_sample")
        r.ibp.unqueried = IbpSettings::UnqueriedEval::prior_sample;
    else
        throw ConfigError("ibp.unqueried_eval must be all_ones or prior_sample");
    r.ibp.relax.validate();
    if (!(r.ibp.alpha > 0.0)) throw ConfigError("ibp.alpha must be positive");

    r.out_dir = cfg.get_string("output.dir", "runs/out");
    const auto eval_every = cfg.get_int("output.eval_every", 5);
    if (eval_every < 1) throw ConfigError("output.eval_every must be >= 1");
    r.eval_every = static_cast<std::size_t>(eval_every);
    r.threads = static_cast<std::size_t>(cfg.get_int("fed.threads", 0));
    return r;
}

namespace {

std::string hash_line(const ExperimentConfig& cfg) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "# config_hash = %016" PRIx64 "\n", cfg.config_hash());
    return buf;
}

std::string history_csv(const TrainingHistory& history) {
    std::string out = "round,selected,mean_accuracy,majority_accuracy,minority_accuracy\n";
    for (const RoundRecord& rec : history.rounds) {
        out += std::to_string(rec.round);
        out += ",";
        for (std::size_t i = 0; i < rec.selected.size(); ++i) {
            if (i > 0) out += ";";
            out += std::to_string(rec.selected[i]);
        }
        out += ",";
        if (rec.evaluated) out += format_accuracy(rec.mean_accuracy);
        out += ",";
        if (rec.evaluated && rec.has_groups) out += format_accuracy(rec.majority_accuracy);
        out += ",";
        if (rec.evaluated && rec.has_groups) out += format_accuracy(rec.minority_accuracy);
        out += "\n";
    }
    return out;
}

std::string clients_csv(const TrainingHistory& history, const PartitionResult& partition) {
    std::string out = "round,client_id,group,accuracy\n";
    for (const RoundRecord& rec : history.rounds) {
        if (!rec.evaluated) continue;
        for (std::size_t i = 0; i < rec.client_accuracy.size(); ++i) {
            out += std::to_string(rec.round);
            out += ",";
            out += std::to_string(partition.clients[i].id);
            out += ",";
            out += to_string(partition.clients[i].group);
            out += ",";
            out += format_accuracy(rec.client_accuracy[i]);
            out += "\n";
        }
    }
    return out;
}

std::vector<ClientEvalRecord> final_records(const TrainingHistory& history,
                                            const PartitionResult& partition) {
    std::vector<ClientEvalRecord> records;
    for (auto it = history.rounds.rbegin(); it != history.rounds.rend(); ++it) {
        if (!it->evaluated) continue;
        for (std::size_t i = 0; i < it->client_accuracy.size(); ++i)
            records.push_back(ClientEvalRecord{partition.clients[i].id,
                                               partition.clients[i].group,
                                               it->client_accuracy[i]});
        return records;
    }
    return records;
}

}  // namespace

std::vector<std::string> emit_plot_data(const TrainingHistory& history, bool multimodal,
                                        const std::string& dir) {
    fs::create_directories(dir);
    struct Curve {
        const char* file;
        double RoundRecord::* field;
        bool group;
    };
    std::vector<Curve> curves = {{"mean_accuracy.dat", &RoundRecord::mean_accuracy, false}};
    if (multimodal) {
        curves.push_back({"majority_accuracy.dat", &RoundRecord::majority_accuracy, true});
        curves.push_back({"minority_accuracy.dat", &RoundRecord::minority_accuracy, true});
    }
    std::vector<std::string> written;
    for (const Curve& c : curves) {
        std::string out;
        for (const RoundRecord& rec : history.rounds) {
            if (!rec.evaluated) continue;
            if (c.group && !rec.has_groups) continue;
            out += std::to_string(rec.round);
            out += " ";
            out += format_accuracy(rec.*(c.field));
            out += "\n";
        }
        const std::string path = (fs::path(dir) / c.file).string();
        atomic_write(path, out);
        written.push_back(path);
    }
    return written;
}

RunArtifacts run_experiment(const ExperimentConfig& cfg, bool verbose) {
    ResolvedExperiment r = resolve_experiment(cfg);
    fs::create_directories(r.out_dir);

    RunOptions options;
    options.eval_every = r.eval_every;
    options.threads = r.threads;
    if (verbose)
        options.on_round = [&](const RoundRecord& rec) {
            if (!rec.evaluated) return;
            std::cout << "round " << rec.round << "/" << r.fed.rounds << "  mean_acc "
                      << format_accuracy(rec.mean_accuracy);
            if (rec.has_groups)
                std::cout << "  majority " << format_accuracy(rec.majority_accuracy)
                          << "  minority " << format_accuracy(rec.minority_accuracy);
            std::cout << "  (" << static_cast<long>(rec.wall_ms) << " ms/round)" << std::endl;
        };

    const RunResult result = run_training(r.fed, r.data, r.partition, r.model, r.ibp, options);

    RunArtifacts artifacts;
    artifacts.dir = r.out_dir;
    artifacts.config_hash = cfg.config_hash();

    auto emit = [&](const std::string& name, const std::string& content) {
        const std::string path = (fs::path(r.out_dir) / name).string();
        atomic_write(path, content);
        artifacts.files.push_back(path);
    };

    emit("config.resolved", hash_line(cfg) + cfg.resolved_text());
    emit("history.csv", history_csv(result.history));
    emit("clients.csv", clients_csv(result.history, r.partition));

    const std::vector<ClientEvalRecord> records = final_records(result.history, r.partition);
    if (!records.empty()) artifacts.final_mean_accuracy = mean_local_accuracy(records);

    std::string summary = "preset,partition,algorithm,parameters,final_mean_accuracy,"
                          "majority_mean,minority_mean,gap,variance\n";
    summary += r.model.name + "," + (r.multimodal ? "multimodal" : "unimodal") + "," +
               std::string(to_string(r.fed.algorithm)) + "," +
               std::to_string(count_parameters(r.model, r.fed.algorithm)) + "," +
               format_accuracy(artifacts.final_mean_accuracy);
    if (r.multimodal && !records.empty()) {
        const FairnessReport rep = fairness_report(records);
        artifacts.fairness = rep;
        summary += "," + format_accuracy(rep.majority_mean / 100.0) + "," +
                   format_accuracy(rep.minority_mean / 100.0) + "," +
                   format_accuracy(rep.gap / 100.0) + "," + format_accuracy(rep.variance);
        emit("fairness.csv",
             "majority_mean,minority_mean,gap,variance\n" + format_accuracy(rep.majority_mean) +
                 "," + format_accuracy(rep.minority_mean) + "," + format_accuracy(rep.gap) + "," +
                 format_accuracy(rep.variance) + "\n");
    } else {
        summary += ",,,,";
    }
    summary += "\n";
    emit("summary.csv", summary);

    for (const std::string& path :
         emit_plot_data(result.history, r.multimodal, (fs::path(r.out_dir) / "plots").string()))
        artifacts.files.push_back(path);

    if (verbose)
        std::cout << "final mean local test accuracy: "
                  << format_accuracy(artifacts.final_mean_accuracy) << std::endl;
    return artifacts;
}

std::vector<RunArtifacts> run_sweep(const ExperimentConfig& cfg, bool verbose) {
    std::vector<RunArtifacts> all;
    const std::string base_dir = cfg.get_string("output.dir", "runs/out");
    for (const ExperimentConfig& cell : cfg.expand_sweep()) {
        ExperimentConfig adjusted = cell;
        const std::string name = cell.cell_name().empty() ? "base" : cell.cell_name();
        adjusted.set("output.dir", (fs::path(base_dir) / name).string());
        if (verbose) std::cout << "== sweep cell: " << name << std::endl;
        all.push_back(run_experiment(adjusted, verbose));
    }
    return all;
}

MiaArtifacts run_mia_experiment(const ExperimentConfig& cfg, bool verbose) {
    const auto seed = static_cast<std::uint64_t>(cfg.get_int("fed.seed", 1));
    const std::string data_preset = cfg.get_string("data.preset", "synthetic");
    LabeledDataset data = resolve_dataset(cfg, data_preset, seed);

    ShadowConfig shadow;
    shadow.num_shadows = static_cast<std::size_t>(cfg.get_int("mia.shadows", 3));
    shadow.clients = static_cast<std::size_t>(cfg.get_int("mia.clients", 4));
    shadow.examples_per_client =
        static_cast<std::size_t>(cfg.get_int("mia.examples_per_client", 120));
    shadow.test_fraction = cfg.get_real("data.test_fraction", 0.2);
    shadow.z = static_cast<std::size_t>(cfg.get_int("data.z", 0));

    const std::string model_preset =
        cfg.get_string("model.preset", default_model_preset(data_preset));
    std::vector<std::size_t> factors = parse_factor_list(cfg);
    if (model_preset == "synth-mlp") {
        const auto hidden = static_cast<std::size_t>(cfg.get_int("model.hidden", 32));
        const std::size_t f = factors.empty() ? 16 : factors[0];
        shadow.model = ModelConfig::synth_mlp(data.features.cols, hidden, data.num_classes, f);
    } else {
        shadow.model = ModelConfig::preset(model_preset);
        if (!factors.empty()) {
            shadow.model.override_factors(factors);
            shadow.model.validate();
        }
    }

    shadow.fed.rounds = static_cast<std::size_t>(cfg.get_int("fed.rounds", 15));
    shadow.fed.fraction = cfg.get_real("fed.fraction", 0.5);
    shadow.fed.local_epochs = static_cast<std::size_t>(cfg.get_int("fed.local_epochs", 8));
    shadow.fed.batch_size = static_cast<std::size_t>(cfg.get_int("fed.batch_size", 10));
    shadow.fed.lr = cfg.get_real("fed.lr", shadow.model.default_lr);
    shadow.fed.mu = cfg.get_real("fed.mu", 1.0);
    shadow.fed.algorithm = algorithm_from_string(cfg.get_string("fed.algorithm", "fedavg"));
    shadow.fed.seed = seed;

    double default_alpha = 1.0;
    const auto fl = shadow.model.factorized_layers();
    if (!fl.empty()) default_alpha = static_cast<double>(shadow.model.layers[fl[0]].num_factors);
    shadow.ibp.alpha = cfg.get_real("ibp.alpha", default_alpha);
    shadow.ibp.relax.temperature = cfg.get_real("ibp.temperature", 0.5);
    shadow.ibp.relax.hard_threshold = cfg.get_real("ibp.hard_threshold", 0.5);
    const std::string completion = cfg.get_string("mia.completion", "all_ones");
    if (completion == "all_ones")
        shadow.completion = ShadowConfig::ViewCompletion::all_ones;
    else if (completion == "prior_sample")
        shadow.completion = ShadowConfig::ViewCompletion::prior_sample;
    else
        throw ConfigError("mia.completion must be all_ones or prior_sample");

    const MiaOutcome outcome = run_mia(data, shadow, seed);

    MiaArtifacts artifacts;
    artifacts.dir = cfg.get_string("output.dir", "runs/mia");
    artifacts.report = outcome.report;
    artifacts.config_hash = cfg.config_hash();
    fs::create_directories(artifacts.dir);

    std::string csv = "algorithm,accuracy,f1";
    for (std::size_t c = 0; c < outcome.attack_train.num_classes; ++c)
        csv += ",class" + std::to_string(c) + "_accuracy";
    csv += "\n";
    csv += std::string(to_string(shadow.fed.algorithm)) + "," +
           format_accuracy(outcome.report.accuracy) + "," + format_accuracy(outcome.report.f1);
    for (double acc : outcome.report.per_class_accuracy) csv += "," + format_accuracy(acc);
    csv += "\n";
    atomic_write((fs::path(artifacts.dir) / "mia_report.csv").string(), csv);
    atomic_write((fs::path(artifacts.dir) / "config.resolved").string(),
                 hash_line(cfg) + cfg.resolved_text());

    (void)verbose;  // the summary line always goes to the run log
    std::cout << "mia " << to_string(shadow.fed.algorithm) << ": attack accuracy "
              << format_accuracy(outcome.report.accuracy) << ", f1 "
              << format_accuracy(outcome.report.f1) << std::endl;
    return artifacts;
}

}  // namespace waffle

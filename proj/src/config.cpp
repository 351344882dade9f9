#include "waffle/config.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include "waffle/error.hpp"

namespace waffle {

namespace {

constexpr std::array kKnownKeys = {
    "data.preset",
    "data.partition",
    "data.images",
    "data.labels",
    "data.batches",
    "data.clients",
    "data.z",
    "data.test_fraction",
    "data.synthetic.classes",
    "data.synthetic.per_class",
    "data.synthetic.dim",
    "data.synthetic.separation",
    "model.preset",
    "model.hidden",
    "ibp.alpha",
    "ibp.factors",
    "ibp.temperature",
    "ibp.hard_threshold",
    "ibp.unqueried_eval",
    "fed.rounds",
    "fed.fraction",
    "fed.local_epochs",
    "fed.batch_size",
    "fed.lr",
    "fed.mu",
    "fed.algorithm",
    "fed.seed",
    "fed.threads",
    "output.dir",
    "output.eval_every",
    "mia.shadows",
    "mia.clients",
    "mia.examples_per_client",
    "mia.completion",
};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void ExperimentConfig::check_key(const std::string& key) {
    std::string base = key;
    if (base.rfind("sweep.", 0) == 0) base = base.substr(6);
    for (const char* known : kKnownKeys)
        if (base == known) return;
    throw ConfigError("unknown config key: " + key);
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str());
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    check_key(key);
    values_[key] = value;
}

bool ExperimentConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ExperimentConfig::get_string(const std::string& key,
                                         const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double ExperimentConfig::get_real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected a number, got '" + it->second + "'");
    }
}

std::int64_t ExperimentConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": expected an integer, got '" + it->second +
                          "'");
    }
}

std::vector<std::string> ExperimentConfig::get_list(const std::string& key) const {
    std::vector<std::string> out;
    auto it = values_.find(key);
    if (it == values_.end()) return out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<ExperimentConfig> ExperimentConfig::expand_sweep() const {
    std::vector<std::pair<std::string, std::vector<std::string>>> grids;
    for (const auto& [key, value] : values_) {
        if (key.rfind("sweep.", 0) != 0) continue;
        std::vector<std::string> items;
        std::istringstream in(value);
        std::string item;
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) items.push_back(item);
        }
        if (items.empty()) throw ConfigError("empty sweep grid for " + key);
        grids.emplace_back(key.substr(6), std::move(items));
    }
    if (grids.empty()) return {*this};

    std::vector<ExperimentConfig> cells;
    std::vector<std::size_t> idx(grids.size(), 0);
    while (true) {
        ExperimentConfig cell = *this;
        for (auto it = cell.values_.begin(); it != cell.values_.end();)
            it = it->first.rfind("sweep.", 0) == 0 ? cell.values_.erase(it) : std::next(it);
        std::string name;
        for (std::size_t g = 0; g < grids.size(); ++g) {
            cell.values_[grids[g].first] = grids[g].second[idx[g]];
            if (!name.empty()) name += "__";
            name += grids[g].first + "-" + grids[g].second[idx[g]];
        }
        cell.cell_name_ = name;
        cells.push_back(std::move(cell));

        std::size_t g = grids.size();
        while (g > 0) {
            --g;
            if (++idx[g] < grids[g].second.size()) break;
            idx[g] = 0;
            if (g == 0) return cells;
        }
    }
}

std::string ExperimentConfig::resolved_text() const {
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key;
        out += " = ";
        out += value;
        out += "\n";
    }
    return out;
}

std::uint64_t ExperimentConfig::config_hash() const {
    const std::string text = resolved_text();
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace waffle

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace waffle {

// Flat key-value experiment configuration with dotted sections:
//
//   # comment
//   fed.rounds = 100
//   sweep.fed.local_epochs = 10,20,30
//
// Unknown keys are rejected. sweep.* keys hold comma lists expanded into a
// cartesian grid of runs.
class ExperimentConfig {
public:
    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_real(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma-separated

    // Grid of configurations from the sweep.* keys (sorted key order, last
    // key fastest). A config without sweeps expands to itself.
    std::vector<ExperimentConfig> expand_sweep() const;

    // Sorted key=value text of every effective key and its FNV-1a hash.
    std::string resolved_text() const;
    std::uint64_t config_hash() const;

    // Label for a sweep cell (empty for the base config).
    std::string cell_name() const { return cell_name_; }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::string cell_name_;

    static void check_key(const std::string& key);
};

}  // namespace waffle

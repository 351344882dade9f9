#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waffle/partition.hpp"

namespace waffle {

struct ClientEvalRecord {
    std::uint32_t client_id = 0;
    GroupTag group = GroupTag::none;
    double accuracy = 0.0;  // in [0,1]
};

// Sub-population statistics in percentage points. Variance is the
// population variance (divide by n) over every client's percentage
// accuracy, majority and minority alike.
struct FairnessReport {
    double majority_mean = 0.0;
    double minority_mean = 0.0;
    double gap = 0.0;  // majority - minority
    double variance = 0.0;
};

double mean_local_accuracy(const std::vector<ClientEvalRecord>& records);

FairnessReport fairness_report(const std::vector<ClientEvalRecord>& records);

// CSV helpers. Accuracies are printed with six decimal places so identical
// runs emit identical bytes.
std::string format_accuracy(double accuracy);

}  // namespace waffle

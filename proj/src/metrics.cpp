#include "waffle/metrics.hpp"

#include <cstdio>

#include "waffle/error.hpp"

namespace waffle {

double mean_local_accuracy(const std::vector<ClientEvalRecord>& records) {
    if (records.empty()) throw ContractError("mean_local_accuracy: no records");
    double sum = 0.0;
    for (const auto& r : records) sum += r.accuracy;
    return sum / static_cast<double>(records.size());
}

FairnessReport fairness_report(const std::vector<ClientEvalRecord>& records) {
    double sum[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (const auto& r : records) {
        if (r.group == GroupTag::majority) {
            sum[0] += r.accuracy;
            ++count[0];
        } else if (r.group == GroupTag::minority) {
            sum[1] += r.accuracy;
            ++count[1];
        }
    }
    if (count[0] == 0 || count[1] == 0)
        throw ContractError("fairness_report: both groups must be non-empty");

    FairnessReport rep;
    rep.majority_mean = 100.0 * sum[0] / static_cast<double>(count[0]);
    rep.minority_mean = 100.0 * sum[1] / static_cast<double>(count[1]);
    rep.gap = rep.majority_mean - rep.minority_mean;

    double mean = 0.0;
    for (const auto& r : records) mean += 100.0 * r.accuracy;
    mean /= static_cast<double>(records.size());
    double var = 0.0;
    for (const auto& r : records) {
        const double d = 100.0 * r.accuracy - mean;
        var += d * d;
    }
    rep.variance = var / static_cast<double>(records.size());
    return rep;
}

std::string format_accuracy(double accuracy) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", accuracy);
    return buf;
}

}  // namespace waffle

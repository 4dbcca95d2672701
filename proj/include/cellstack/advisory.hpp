#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cellstack/mple.hpp"

namespace cellstack::advisory {

// Fixed decision thresholds; all configurable, none learned.
struct Thresholds {
    double alpha_ratio_max = 2.0;  // 2D/serial MAE(alpha) ratio below which 2D suffices
    double b_ratio_min = 1.25;     // 2D/serial MAE(B) ratio above which serial is advised
    double iqr_high = 1.0;         // enrichment IQR flagged as unstable
};

struct GoalAdvice {
    std::string goal;
    std::string recommendation;
    std::string rationale;
    std::map<std::string, double> statistics;
    bool sufficient_evidence = false;
};

struct AdvisoryReport {
    std::vector<GoalAdvice> goals;  // global composition, local interactions, structures
};

// Maps measured stability gaps onto the acquisition rules-of-thumb:
// planar sampling for global composition when its error stays comparable,
// serial sampling plus reconstruction for interaction and structure
// questions. Deterministic given inputs and thresholds.
AdvisoryReport advise(const std::vector<mple::RecoveryReport>& recovery,
                      std::optional<double> enrichment_median_iqr, const Thresholds& thresholds);

std::string to_json(const AdvisoryReport& report);

}  // namespace cellstack::advisory

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "far/boxes.hpp"
#include "far/types.hpp"

namespace far {

struct MatchResult {
    std::vector<std::pair<int, int>> pairs;  // (row, col) = (pred, gt)
    std::vector<int> unmatched_preds;
    std::vector<int> unmatched_gts;
    std::vector<double> pair_costs;

    double total_cost() const;
};

/// Minimum-cost one-to-one assignment of min(n, m) pairs.
MatchResult hungarian_match(const MatX& cost);

struct ScoredBox {
    Box3D box;
    double score = 0.0;
};

struct RecallResult {
    std::vector<double> values;  // aligned with the threshold list
    bool empty_gts = false;      // recall defined as 1.0 in that case
};

/// Greedy recall: predictions in descending score order claim their
/// nearest unmatched GT within the center-distance threshold.
RecallResult recall_at(const std::vector<ScoredBox>& preds, const std::vector<Box3D>& gts,
                       const std::vector<double>& thresholds);

/// Area under the precision-recall curve with the all-points precision
/// envelope; greedy TP assignment at one center-distance threshold.
double average_precision(const std::vector<ScoredBox>& preds, const std::vector<Box3D>& gts,
                         double threshold);

struct TpErrors {
    double ate = 0.0;
    double ase = 0.0;
    double aoe = 0.0;
    bool defined = false;  // false when there are no pairs
};

/// Mean center distance, 1 - aligned IoU, and folded yaw difference
/// over matched pairs.
TpErrors tp_errors(const std::vector<std::pair<Box3D, Box3D>>& pairs);

struct RangeBand {
    double lo = 0.0;
    double hi = 0.0;
    std::string label() const;
};

struct BandThresholdMetrics {
    double threshold = 0.0;
    double recall = 0.0;
    double ap = 0.0;
};

struct BandReport {
    RangeBand band;
    int n_gt = 0;
    int n_pred = 0;
    bool empty_gts = false;
    std::vector<BandThresholdMetrics> per_threshold;
    TpErrors errors;  // computed at the largest threshold
};

struct MetricsReport {
    std::string variant;
    std::uint64_t seed = 0;
    int frames = 0;
    std::vector<BandReport> bands;

    nlohmann::ordered_json to_json() const;
    std::string to_csv() const;
    static MetricsReport from_json(const nlohmann::json& j);
};

/// Metrics per range band. `bands` must be non-overlapping; an
/// aggregate band spanning them is appended automatically. GT and
/// predictions are banded by their own ground-plane range.
MetricsReport range_band_metrics(const std::vector<ScoredBox>& preds,
                                 const std::vector<Box3D>& gts,
                                 const std::vector<RangeBand>& bands,
                                 const std::vector<double>& thresholds);

}  // namespace far

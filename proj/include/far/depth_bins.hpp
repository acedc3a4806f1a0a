// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json_fwd.hpp>

#include "far/types.hpp"

namespace far {

enum class DepthSpacing { Uniform, LogUniform };

/// Discretization of the metric depth axis into classification bins.
struct DepthBinConfig {
    double d_min = 1.0;
    double d_max = 153.0;
    int n_bins = 64;
    DepthSpacing spacing = DepthSpacing::LogUniform;

    void validate() const;

    static DepthBinConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
};

/// Categorical distribution over depth bins.
struct DepthDistribution {
    VecX probs;

    // Normalization checked to 1e-9; weights must be nonnegative and finite.
    void validate(int n_bins) const;
};

/// Boundary i of the partition, i in [0, n_bins]. Edge 0 is d_min and
/// edge n_bins is d_max.
double bin_edge(int i, const DepthBinConfig& cfg);

/// Bin index for a depth in [d_min, d_max]. Boundary values go to the
/// lower bin except d_max, which maps to the last bin.
int depth_to_bin(double d, const DepthBinConfig& cfg);

/// Arithmetic (uniform) or geometric (log-uniform) center of bin b.
double bin_to_depth(int b, const DepthBinConfig& cfg);

/// Probability-weighted mean of the bin centers.
double expected_depth(const DepthDistribution& dist, const DepthBinConfig& cfg);

/// Analytic width of the bin scale at depth d: constant for uniform
/// spacing, proportional to d for log-uniform spacing.
double local_bin_width(double d, const DepthBinConfig& cfg);

}  // namespace far

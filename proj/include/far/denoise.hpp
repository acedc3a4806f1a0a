// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "far/boxes.hpp"
#include "far/query.hpp"
#include "far/rng.hpp"
#include "far/types.hpp"

namespace far {

enum class NoiseForm { Log, Linear, Sqrt, Fixed };

/// Shape of the range-modulated noise applied to negatives.
struct NoiseSpec {
    NoiseForm form = NoiseForm::Log;
    double lambda = 2.0;
    int groups = 3;              // G
    int negatives_per_group = 2; // K

    void validate() const;
    static NoiseSpec from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
};

/// One GT-recovering positive plus K reject-target negatives.
struct DenoiseGroup {
    int gt_index = -1;
    Query positive;
    std::vector<Query> negatives;
};

/// Supervision for one denoise query, aligned with the flattened group
/// order (per group: positive first, then negatives).
struct DenoiseTarget {
    bool is_positive = false;
    Box3D regression;      // the GT box, positives only
    double class_target = 0.0;
};

/// Random offset strictly inside the box: per-axis uniform(-1, 1)
/// scaled by the half extents in the yaw-aligned frame, then rotated.
Vec3 positive_offset(const Box3D& box, Rng& rng);

/// Closed-form noise magnitude lambda * g(r) for a ground range r.
double noise_magnitude(double r, const NoiseSpec& spec);

/// Ground-plane offset with range-modulated magnitude and uniform
/// direction; z component stays zero.
Vec3 negative_offset(const Vec3& center, const NoiseSpec& spec, Rng& rng);

/// G groups of (1 positive + K negatives) per GT, with embeddings and
/// supervision targets. Per-GT streams derive from base_seed XOR the GT
/// index, so groups are stable under GT-parallel generation.
std::pair<std::vector<DenoiseGroup>, std::vector<DenoiseTarget>> make_noise_groups(
    const std::vector<Box3D>& gts, const NoiseSpec& spec, const EmbedParams& params,
    std::uint64_t base_seed);

/// Per-negative distance beyond the GT half-diagonal, in flattened
/// group order. Negative values flag weak specs rather than erroring.
std::vector<double> separation_margin(const std::vector<DenoiseGroup>& groups,
                                      const std::vector<Box3D>& gts);

}  // namespace far

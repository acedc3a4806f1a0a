// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "far/depth_bins.hpp"
#include "far/embed.hpp"
#include "far/geometry.hpp"
#include "far/types.hpp"

namespace far {

/// 2D detector output in one view.
struct Detection2D {
    int view = -1;
    double u_min = 0.0, v_min = 0.0, u_max = 0.0, v_max = 0.0;
    double score = 0.0;
    std::string category;
    VecX z_2d;  // context feature at the box center

    double center_u() const { return 0.5 * (u_min + u_max); }
    double center_v() const { return 0.5 * (v_min + v_max); }
    double area() const { return (u_max - u_min) * (v_max - v_min); }
    void validate() const;
};

enum class QueryKind { Global, Adaptive, Propagated, DenoisePositive, DenoiseNegative };

std::string to_string(QueryKind k);

inline bool is_denoise(QueryKind k) {
    return k == QueryKind::DenoisePositive || k == QueryKind::DenoiseNegative;
}

/// Provenance of a query; unused fields stay -1.
struct QuerySource {
    int view = -1;
    int det_index = -1;
    int gt_index = -1;
    int noise_group = -1;
};

/// Tagged 3D object hypothesis.
struct Query {
    QueryKind kind = QueryKind::Global;
    Vec3 ref_point = Vec3::Zero();
    VecX embedding;
    double score = 0.0;
    std::string category;
    QuerySource source;
};

/// Keeps detections with score >= tau, preserving order.
std::vector<Detection2D> filter_proposals(const std::vector<Detection2D>& dets, double tau);

/// Unprojects surviving detections into adaptive queries. Depth comes
/// from the soft-decoded distribution, or from `gt_depths` when
/// `use_gt_depth` is set (warm-up mode). Decoded points outside the
/// perception range box (params.bounds) are dropped.
std::vector<Query> generate_adaptive_queries(const std::vector<Detection2D>& dets,
                                             const std::vector<DepthDistribution>& depth_lookup,
                                             const CameraRig& rig, const DepthBinConfig& cfg,
                                             const EmbedParams& params, double tau,
                                             bool use_gt_depth = false,
                                             const std::vector<double>* gt_depths = nullptr);

/// n seeded uniform anchors over the range box, embedded positionally.
std::vector<Query> make_global_queries(int n, std::uint64_t seed, const EmbedParams& params,
                                       const Range3& range_box);

/// Concatenates the three parts in order global, adaptive, propagated.
std::vector<Query> assemble_query_set(const std::vector<Query>& global,
                                      const std::vector<Query>& adaptive,
                                      const std::vector<Query>& propagated);

nlohmann::ordered_json detection_to_json(const Detection2D& det);
nlohmann::ordered_json query_to_json(const Query& q);

}  // namespace far

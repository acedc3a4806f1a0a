// SPDX-License-Identifier: Apache-2.0
#include "far/query.hpp"

#include <stdexcept>

#include <nlohmann/json.hpp>

#include "far/rng.hpp"

namespace far {

void Detection2D::validate() const {
    if (!(u_min < u_max) || !(v_min < v_max))
        throw std::invalid_argument("detection: degenerate box");
    if (!(score >= 0.0) || !(score <= 1.0))
        throw std::invalid_argument("detection: score outside [0, 1]");
}

std::string to_string(QueryKind k) {
    switch (k) {
        case QueryKind::Global: return "global";
        case QueryKind::Adaptive: return "adaptive";
        case QueryKind::Propagated: return "propagated";
        case QueryKind::DenoisePositive: return "denoise_positive";
        case QueryKind::DenoiseNegative: return "denoise_negative";
    }
    throw std::logic_error("query: unknown kind");
}

std::vector<Detection2D> filter_proposals(const std::vector<Detection2D>& dets, double tau) {
    if (!(tau >= 0.0) || !(tau <= 1.0))
        throw std::invalid_argument("filter: tau outside [0, 1]");
    std::vector<Detection2D> kept;
    for (const auto& d : dets)
        if (d.score >= tau) kept.push_back(d);
    return kept;
}

std::vector<Query> generate_adaptive_queries(const std::vector<Detection2D>& dets,
                                             const std::vector<DepthDistribution>& depth_lookup,
                                             const CameraRig& rig, const DepthBinConfig& cfg,
                                             const EmbedParams& params, double tau,
                                             bool use_gt_depth, const std::vector<double>* gt_depths) {
    if (depth_lookup.size() != dets.size())
        throw std::invalid_argument("adaptive: depth lookup not aligned with detections");
    if (use_gt_depth && (!gt_depths || gt_depths->size() != dets.size()))
        throw std::invalid_argument("adaptive: GT depths not aligned with detections");
    params.validate();
    std::vector<Query> out;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const Detection2D& det = dets[i];
        if (det.score < tau) continue;
        const double depth =
            use_gt_depth ? (*gt_depths)[i] : expected_depth(depth_lookup[i], cfg);
        const Pixel pix{det.center_u(), det.center_v(), det.view};
        const Vec3 p = unproject_pixel(pix, depth, rig);
        if (!params.bounds.contains(p)) continue;
        Query q;
        q.kind = QueryKind::Adaptive;
        q.ref_point = p;
        q.embedding = pos_embed(p, params) + sem_embed(det.z_2d, det.score, params);
        q.score = det.score;
        q.category = det.category;
        q.source.view = det.view;
        q.source.det_index = static_cast<int>(i);
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<Query> make_global_queries(int n, std::uint64_t seed, const EmbedParams& params,
                                       const Range3& range_box) {
    if (n < 0) throw std::invalid_argument("global queries: negative count");
    if (!range_box.valid()) throw std::invalid_argument("global queries: invalid range box");
    params.validate();
    Rng rng(seed);
    std::vector<Query> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Query q;
        q.kind = QueryKind::Global;
        for (int axis = 0; axis < 3; ++axis)
            q.ref_point[axis] = rng.uniform(range_box.lo[axis], range_box.hi[axis]);
        q.embedding = pos_embed(q.ref_point, params);
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<Query> assemble_query_set(const std::vector<Query>& global,
                                      const std::vector<Query>& adaptive,
                                      const std::vector<Query>& propagated) {
    std::vector<Query> out;
    out.reserve(global.size() + adaptive.size() + propagated.size());
    Eigen::Index dim = -1;
    for (const auto* part : {&global, &adaptive, &propagated}) {
        for (const auto& q : *part) {
            if (dim < 0) dim = q.embedding.size();
            if (q.embedding.size() != dim)
                throw std::invalid_argument("assemble: embedding dimension mismatch");
            out.push_back(q);
        }
    }
    return out;
}

nlohmann::ordered_json detection_to_json(const Detection2D& det) {
    nlohmann::ordered_json j;
    j["view"] = det.view;
    j["box"] = {det.u_min, det.v_min, det.u_max, det.v_max};
    j["score"] = det.score;
    j["category"] = det.category;
    j["center"] = {det.center_u(), det.center_v()};
    return j;
}

nlohmann::ordered_json query_to_json(const Query& q) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(q.kind);
    j["ref_point"] = {q.ref_point.x(), q.ref_point.y(), q.ref_point.z()};
    j["score"] = q.score;
    if (q.source.view >= 0) j["view"] = q.source.view;
    return j;
}

}  // namespace far

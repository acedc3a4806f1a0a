// SPDX-License-Identifier: Apache-2.0
#include "far/temporal.hpp"

#include <algorithm>
#include <stdexcept>

namespace far {

void EgoMotion::validate() const {
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("ego motion: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument("ego motion: rotation determinant is not +1");
    if (!translation.allFinite())
        throw std::invalid_argument("ego motion: translation is not finite");
}

namespace {

/// Indices of the top-k non-denoise queries, score descending with
/// ties broken toward the lower index.
std::vector<int> ranked_top_k(const std::vector<Query>& queries,
                              const std::vector<double>& scores, int k) {
    if (scores.size() != queries.size())
        throw std::invalid_argument("propagate: scores not aligned with queries");
    if (k < 0) throw std::invalid_argument("propagate: negative k");
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(queries.size()); ++i)
        if (!is_denoise(queries[static_cast<std::size_t>(i)].kind)) idx.push_back(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    if (static_cast<int>(idx.size()) > k) idx.resize(static_cast<std::size_t>(k));
    return idx;
}

}  // namespace

std::vector<Query> select_propagated(const std::vector<Query>& queries,
                                     const std::vector<double>& scores, int k) {
    std::vector<Query> out;
    for (int i : ranked_top_k(queries, scores, k)) {
        Query q = queries[static_cast<std::size_t>(i)];
        q.kind = QueryKind::Propagated;
        out.push_back(std::move(q));
    }
    return out;
}

Query ego_compensate(const Query& q, const EgoMotion& motion, const EmbedParams& params) {
    motion.validate();
    Query out = q;
    out.ref_point = motion.rotation * q.ref_point + motion.translation;
    out.embedding = pos_embed(out.ref_point, params);
    return out;
}

QueryMemory::QueryMemory(int capacity) : capacity_(capacity) {
    if (capacity < 0) throw std::invalid_argument("memory: negative capacity");
}

std::vector<Query> QueryMemory::emit(const EgoMotion& motion, const EmbedParams& params) const {
    std::vector<Query> out;
    out.reserve(stored_.size());
    for (const auto& q : stored_) out.push_back(ego_compensate(q, motion, params));
    return out;
}

void QueryMemory::refill(const std::vector<Query>& frame_queries,
                         const std::vector<double>& frame_scores) {
    stored_.clear();
    scores_.clear();
    for (int i : ranked_top_k(frame_queries, frame_scores, capacity_)) {
        Query q = frame_queries[static_cast<std::size_t>(i)];
        q.kind = QueryKind::Propagated;
        stored_.push_back(std::move(q));
        scores_.push_back(frame_scores[static_cast<std::size_t>(i)]);
    }
}

std::vector<Query> step_memory(QueryMemory& mem, const std::vector<Query>& frame_queries,
                               const std::vector<double>& frame_scores, const EgoMotion& motion,
                               const EmbedParams& params) {
    std::vector<Query> propagated = mem.emit(motion, params);
    mem.refill(frame_queries, frame_scores);
    return propagated;
}

}  // namespace far

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "far/query.hpp"
#include "far/types.hpp"

namespace far {

/// Rigid transform from the previous ego frame into the current one.
struct EgoMotion {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const;
};

/// Top-k queries by score, ties broken toward the lower index, denoise
/// kinds excluded; the survivors' kinds become propagated.
std::vector<Query> select_propagated(const std::vector<Query>& queries,
                                     const std::vector<double>& scores, int k);

/// Re-expresses the reference point in the current frame and recomputes
/// the positional embedding there; everything else is preserved.
Query ego_compensate(const Query& q, const EgoMotion& motion, const EmbedParams& params);

/// Score-ranked query store carried between frames of one sequence.
class QueryMemory {
public:
    explicit QueryMemory(int capacity);

    int capacity() const { return capacity_; }
    const std::vector<Query>& stored() const { return stored_; }
    const std::vector<double>& stored_scores() const { return scores_; }

    /// Ego-compensates and returns the stored queries.
    std::vector<Query> emit(const EgoMotion& motion, const EmbedParams& params) const;

    /// Replaces the store with this frame's top-k.
    void refill(const std::vector<Query>& frame_queries, const std::vector<double>& frame_scores);

private:
    int capacity_;
    std::vector<Query> stored_;
    std::vector<double> scores_;
};

/// One frame step: emits the previous frame's survivors (compensated),
/// then refills the memory from this frame's queries.
std::vector<Query> step_memory(QueryMemory& mem, const std::vector<Query>& frame_queries,
                               const std::vector<double>& frame_scores, const EgoMotion& motion,
                               const EmbedParams& params);

}  // namespace far

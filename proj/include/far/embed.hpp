// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "far/types.hpp"

namespace far {

/// Weights for the positional and semantic embedding heads. Both heads
/// are two affine layers with a ReLU in between; the positional head
/// consumes sinusoidal features of the normalized 3D point, the semantic
/// head consumes a 2D feature vector concatenated with its score.
struct EmbedParams {
    int dim = 32;          // embedding dimension D
    int feat_dim = 8;      // 2D feature dimension C
    int frequencies = 4;   // sinusoid count per coordinate
    Range3 bounds;         // coordinate normalization box (perception range)

    MatX pos_w1, pos_w2;
    VecX pos_b1, pos_b2;
    MatX sem_w1, sem_w2;
    VecX sem_b1, sem_b2;

    int pos_input_dim() const { return 6 * frequencies; }
    int sem_input_dim() const { return feat_dim + 1; }
    void validate() const;
};

/// Random parameters with gaussian fan-in scaled weights; deterministic
/// in the seed.
EmbedParams make_embed_params(std::uint64_t seed, int dim, int feat_dim, int frequencies,
                              int hidden, const Range3& bounds);

/// Sinusoidal features of the normalized point, before the MLP. Layout:
/// per axis, per frequency k: sin(2^k pi x), cos(2^k pi x).
VecX sinusoidal_features(const Vec3& p, const EmbedParams& params);

/// Positional embedding of an ego-frame point.
VecX pos_embed(const Vec3& p, const EmbedParams& params);

/// Semantic embedding of a 2D feature vector and its detection score.
VecX sem_embed(const VecX& z_2d, double s_2d, const EmbedParams& params);

}  // namespace far

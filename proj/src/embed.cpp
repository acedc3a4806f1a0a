// SPDX-License-Identifier: Apache-2.0
#include "far/embed.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "far/rng.hpp"

namespace far {

void EmbedParams::validate() const {
    if (dim < 1 || feat_dim < 1 || frequencies < 1)
        throw std::invalid_argument("embed: dimensions must be positive");
    if (!bounds.valid()) throw std::invalid_argument("embed: normalization bounds must be ordered");
    if (pos_w1.cols() != pos_input_dim() || pos_b1.size() != pos_w1.rows() ||
        pos_w2.cols() != pos_w1.rows() || pos_w2.rows() != dim || pos_b2.size() != dim)
        throw std::invalid_argument("embed: positional MLP shapes inconsistent");
    if (sem_w1.cols() != sem_input_dim() || sem_b1.size() != sem_w1.rows() ||
        sem_w2.cols() != sem_w1.rows() || sem_w2.rows() != dim || sem_b2.size() != dim)
        throw std::invalid_argument("embed: semantic MLP shapes inconsistent");
}

namespace {

MatX random_matrix(Rng& rng, int rows, int cols) {
    MatX m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.gauss();
    return m;
}

VecX random_vector(Rng& rng, int n) {
    VecX v(n);
    for (int i = 0; i < n; ++i) v[i] = 0.1 * rng.gauss();
    return v;
}

VecX mlp2(const MatX& w1, const VecX& b1, const MatX& w2, const VecX& b2, const VecX& x) {
    const VecX h = (w1 * x + b1).cwiseMax(0.0);
    return w2 * h + b2;
}

}  // namespace

EmbedParams make_embed_params(std::uint64_t seed, int dim, int feat_dim, int frequencies,
                              int hidden, const Range3& bounds) {
    EmbedParams p;
    p.dim = dim;
    p.feat_dim = feat_dim;
    p.frequencies = frequencies;
    p.bounds = bounds;
    Rng rng(seed);
    p.pos_w1 = random_matrix(rng, hidden, p.pos_input_dim());
    p.pos_b1 = random_vector(rng, hidden);
    p.pos_w2 = random_matrix(rng, dim, hidden);
    p.pos_b2 = random_vector(rng, dim);
    p.sem_w1 = random_matrix(rng, hidden, p.sem_input_dim());
    p.sem_b1 = random_vector(rng, hidden);
    p.sem_w2 = random_matrix(rng, dim, hidden);
    p.sem_b2 = random_vector(rng, dim);
    p.validate();
    return p;
}

VecX sinusoidal_features(const Vec3& p, const EmbedParams& params) {
    const Vec3 span = params.bounds.extent();
    VecX feat(params.pos_input_dim());
    int idx = 0;
    for (int axis = 0; axis < 3; ++axis) {
        const double x = (p[axis] - params.bounds.lo[axis]) / span[axis];
        double freq = std::numbers::pi;
        for (int k = 0; k < params.frequencies; ++k) {
            feat[idx++] = std::sin(freq * x);
            feat[idx++] = std::cos(freq * x);
            freq *= 2.0;
        }
    }
    return feat;
}

VecX pos_embed(const Vec3& p, const EmbedParams& params) {
    params.validate();
    return mlp2(params.pos_w1, params.pos_b1, params.pos_w2, params.pos_b2,
                sinusoidal_features(p, params));
}

VecX sem_embed(const VecX& z_2d, double s_2d, const EmbedParams& params) {
    params.validate();
    if (z_2d.size() != params.feat_dim)
        throw std::invalid_argument("embed: 2D feature dimension mismatch");
    VecX in(params.sem_input_dim());
    in.head(params.feat_dim) = z_2d;
    in[params.feat_dim] = s_2d;
    return mlp2(params.sem_w1, params.sem_b1, params.sem_w2, params.sem_b2, in);
}

}  // namespace far

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "far/geometry.hpp"
#include "far/pyramid.hpp"
#include "far/types.hpp"

namespace far {

/// Squeeze-and-excitation weights over the 16-value camera vector
/// (fx, fy, cx, cy, rotation row-major, translation).
struct GateParams {
    MatX w1;  // hidden x 16
    VecX b1;
    MatX w2;  // channels x hidden
    VecX b2;

    void validate() const;
};

GateParams make_gate_params(std::uint64_t seed, int channels, int hidden);

/// The flattened camera vector the gate is conditioned on.
VecX camera_vector(const Camera& cam);

/// Channelwise gate sigma(w2 relu(w1 v + b1) + b2) per view, applied to
/// every cell. Output shape equals input shape.
FeaturePyramid camera_gate(const FeaturePyramid& pyr, const CameraRig& rig, const GateParams& g);

struct SampleResult {
    VecX value;
    bool valid = false;
};

/// Bilinear interpolation at full-image pixel coordinates. Coordinates
/// are divided by the level stride and shifted half a cell so that
/// integer grid positions are cell centers. Any of the 4 neighbors
/// falling outside the grid makes the sample invalid (zero value).
SampleResult bilinear_sample(const FeatureLevel& level, double u, double v);

struct SampleGrad {
    VecX du;
    VecX dv;
};

/// Analytic partials of bilinear_sample w.r.t. full-image pixels.
/// Throws when the sample at (u, v) is invalid.
SampleGrad bilinear_sample_grad(const FeatureLevel& level, double u, double v);

/// Per-query sampling pattern: M offsets in ego meters, plus one raw
/// attention weight per (offset, view, level).
struct SamplePlan {
    std::vector<Vec3> offsets;
    std::vector<double> weights;  // size offsets * n_views * n_levels
    int n_views = 0;
    int n_levels = 0;

    double weight(int m, int view, int level) const {
        return weights[static_cast<std::size_t>((m * n_views + view) * n_levels + level)];
    }
    void validate() const;
};

/// Uniform-weight plan with the given offsets.
SamplePlan make_uniform_plan(const std::vector<Vec3>& offsets, int n_views, int n_levels);

struct AggregateResult {
    VecX value;
    int valid_samples = 0;
    bool all_invalid = false;
};

/// Projects ref + offset into every view, samples every level, and
/// softmax-combines the valid samples; zero vector when nothing is
/// visible.
AggregateResult deformable_aggregate(const Vec3& ref_point, const SamplePlan& plan,
                                     const FeaturePyramid& pyr, const CameraRig& rig);

}  // namespace far

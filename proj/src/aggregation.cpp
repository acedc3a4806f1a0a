// SPDX-License-Identifier: Apache-2.0
#include "far/aggregation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "far/rng.hpp"

namespace far {

void GateParams::validate() const {
    if (w1.cols() != 16 || b1.size() != w1.rows())
        throw std::invalid_argument("gate: first layer must consume the 16-value camera vector");
    if (w2.cols() != w1.rows() || b2.size() != w2.rows())
        throw std::invalid_argument("gate: layer shapes inconsistent");
}

GateParams make_gate_params(std::uint64_t seed, int channels, int hidden) {
    Rng rng(seed);
    GateParams g;
    g.w1.resize(hidden, 16);
    g.b1.resize(hidden);
    g.w2.resize(channels, hidden);
    g.b2.resize(channels);
    const double s1 = 1.0 / 4.0;  // 1/sqrt(16)
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (int r = 0; r < hidden; ++r)
        for (int c = 0; c < 16; ++c) g.w1(r, c) = s1 * rng.gauss();
    for (int r = 0; r < hidden; ++r) g.b1[r] = 0.1 * rng.gauss();
    for (int r = 0; r < channels; ++r)
        for (int c = 0; c < hidden; ++c) g.w2(r, c) = s2 * rng.gauss();
    for (int r = 0; r < channels; ++r) g.b2[r] = 0.1 * rng.gauss();
    g.validate();
    return g;
}

VecX camera_vector(const Camera& cam) {
    VecX v(16);
    v[0] = cam.intrinsics.fx;
    v[1] = cam.intrinsics.fy;
    v[2] = cam.intrinsics.cx;
    v[3] = cam.intrinsics.cy;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) v[4 + 3 * r + c] = cam.pose.rotation(r, c);
    v.tail(3) = cam.pose.translation;
    return v;
}

FeaturePyramid camera_gate(const FeaturePyramid& pyr, const CameraRig& rig, const GateParams& g) {
    pyr.validate();
    g.validate();
    if (pyr.n_views() != rig.size())
        throw std::invalid_argument("gate: pyramid and rig view counts differ");
    if (g.w2.rows() != pyr.channels())
        throw std::invalid_argument("gate: output dimension must equal channel count");
    FeaturePyramid out = pyr;
    for (int view = 0; view < rig.size(); ++view) {
        const VecX pre = g.w2 * (g.w1 * camera_vector(rig.camera(view)) + g.b1).cwiseMax(0.0) + g.b2;
        const VecX gate = (1.0 + (-pre.array()).exp()).inverse().matrix();
        for (auto& level : out.views[static_cast<std::size_t>(view)])
            level.data = level.data.array().rowwise() * gate.transpose().array();
    }
    return out;
}

SampleResult bilinear_sample(const FeatureLevel& level, double u, double v) {
    SampleResult res;
    res.value = VecX::Zero(level.channels());
    // Cell centers sit at (x + 0.5) * stride in full-image pixels.
    const double gu = u / level.stride - 0.5;
    const double gv = v / level.stride - 0.5;
    const double fx0 = std::floor(gu);
    const double fy0 = std::floor(gv);
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    if (x0 < 0 || y0 < 0 || x0 + 1 >= level.width || y0 + 1 >= level.height) return res;
    const double au = gu - fx0;
    const double av = gv - fy0;
    res.value = ((1.0 - au) * (1.0 - av) * level.cell(x0, y0) +
                 au * (1.0 - av) * level.cell(x0 + 1, y0) +
                 (1.0 - au) * av * level.cell(x0, y0 + 1) +
                 au * av * level.cell(x0 + 1, y0 + 1))
                    .transpose();
    res.valid = true;
    return res;
}

SampleGrad bilinear_sample_grad(const FeatureLevel& level, double u, double v) {
    const double gu = u / level.stride - 0.5;
    const double gv = v / level.stride - 0.5;
    const double fx0 = std::floor(gu);
    const double fy0 = std::floor(gv);
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    if (x0 < 0 || y0 < 0 || x0 + 1 >= level.width || y0 + 1 >= level.height)
        throw std::invalid_argument("bilinear grad: sample is invalid at this location");
    const double au = gu - fx0;
    const double av = gv - fy0;
    const double inv_s = 1.0 / level.stride;
    SampleGrad g;
    g.du = inv_s * ((1.0 - av) * (level.cell(x0 + 1, y0) - level.cell(x0, y0)) +
                    av * (level.cell(x0 + 1, y0 + 1) - level.cell(x0, y0 + 1)))
                       .transpose();
    g.dv = inv_s * ((1.0 - au) * (level.cell(x0, y0 + 1) - level.cell(x0, y0)) +
                    au * (level.cell(x0 + 1, y0 + 1) - level.cell(x0 + 1, y0)))
                       .transpose();
    return g;
}

void SamplePlan::validate() const {
    if (offsets.empty()) throw std::invalid_argument("plan: need at least one offset");
    if (n_views < 1 || n_levels < 1) throw std::invalid_argument("plan: view/level counts missing");
    if (weights.size() != offsets.size() * static_cast<std::size_t>(n_views) * n_levels)
        throw std::invalid_argument("plan: weight count mismatch");
    for (double w : weights)
        if (!std::isfinite(w)) throw std::invalid_argument("plan: nonfinite weight");
}

SamplePlan make_uniform_plan(const std::vector<Vec3>& offsets, int n_views, int n_levels) {
    SamplePlan plan;
    plan.offsets = offsets;
    plan.n_views = n_views;
    plan.n_levels = n_levels;
    plan.weights.assign(offsets.size() * static_cast<std::size_t>(n_views) * n_levels, 0.0);
    plan.validate();
    return plan;
}

AggregateResult deformable_aggregate(const Vec3& ref_point, const SamplePlan& plan,
                                     const FeaturePyramid& pyr, const CameraRig& rig) {
    plan.validate();
    if (plan.n_views != pyr.n_views() || plan.n_levels != pyr.n_levels() ||
        pyr.n_views() != rig.size())
        throw std::invalid_argument("aggregate: plan, pyramid, and rig shapes disagree");

    struct Entry {
        double raw;
        VecX value;
    };
    std::vector<Entry> entries;
    double max_raw = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < plan.offsets.size(); ++m) {
        const Vec3 p = ref_point + plan.offsets[m];
        for (int view = 0; view < rig.size(); ++view) {
            const Projection proj = project_point(p, view, rig);
            if (proj.behind) continue;
            for (int level = 0; level < plan.n_levels; ++level) {
                const auto& grid = pyr.views[static_cast<std::size_t>(view)]
                                           [static_cast<std::size_t>(level)];
                SampleResult s = bilinear_sample(grid, proj.pixel.u, proj.pixel.v);
                if (!s.valid) continue;
                const double raw = plan.weight(static_cast<int>(m), view, level);
                max_raw = std::max(max_raw, raw);
                entries.push_back({raw, std::move(s.value)});
            }
        }
    }

    AggregateResult out;
    out.value = VecX::Zero(pyr.channels());
    out.valid_samples = static_cast<int>(entries.size());
    if (entries.empty()) {
        out.all_invalid = true;
        return out;
    }
    double denom = 0.0;
    for (const auto& e : entries) denom += std::exp(e.raw - max_raw);
    for (const auto& e : entries) out.value += (std::exp(e.raw - max_raw) / denom) * e.value;
    return out;
}

}  // namespace far

// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "far/aggregation.hpp"
#include "far/rng.hpp"
#include "far/sim.hpp"
#include "oracles.hpp"

using namespace far;

namespace {

FeaturePyramid constant_pyramid(const CameraRig& rig, const std::vector<int>& strides,
                                int channels, double value) {
    FeaturePyramid pyr;
    for (int view = 0; view < rig.size(); ++view) {
        std::vector<FeatureLevel> levels;
        for (int stride : strides) {
            FeatureLevel level;
            level.stride = stride;
            level.width = rig.camera(view).intrinsics.width / stride;
            level.height = rig.camera(view).intrinsics.height / stride;
            level.data = MatX::Constant(static_cast<Eigen::Index>(level.height) * level.width,
                                        channels, value);
            levels.push_back(std::move(level));
        }
        pyr.views.push_back(std::move(levels));
    }
    return pyr;
}

FeaturePyramid noisy_pyramid(Rng& rng, const CameraRig& rig, const std::vector<int>& strides,
                             int channels) {
    FeaturePyramid pyr = constant_pyramid(rig, strides, channels, 0.0);
    for (auto& view : pyr.views)
        for (auto& level : view)
            for (Eigen::Index r = 0; r < level.data.rows(); ++r)
                for (int c = 0; c < channels; ++c) level.data(r, c) = rng.gauss();
    return pyr;
}

SamplePlan random_plan(Rng& rng, int m, int n_views, int n_levels, double radius) {
    std::vector<Vec3> offsets;
    for (int i = 0; i < m; ++i)
        offsets.emplace_back(rng.uniform(-radius, radius), rng.uniform(-radius, radius),
                             rng.uniform(-radius, radius));
    SamplePlan plan = make_uniform_plan(offsets, n_views, n_levels);
    for (auto& w : plan.weights) w = rng.uniform(-2.0, 2.0);
    return plan;
}

}  // namespace

TEST_SUITE_BEGIN("aggregation");

TEST_CASE("constant pyramid collapses to the constant") {
    Rng rng(601);
    const CameraRig rig = make_default_rig();
    const FeaturePyramid pyr = constant_pyramid(rig, {8, 16, 32, 64}, 6, 3.25);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 ref(rng.uniform(-60.0, 60.0), rng.uniform(-60.0, 60.0), rng.uniform(-2.0, 2.0));
        const SamplePlan plan = random_plan(rng, 4, rig.size(), 4, 1.5);
        const AggregateResult out = deformable_aggregate(ref, plan, pyr, rig);
        if (out.all_invalid) continue;
        for (int c = 0; c < 6; ++c) CHECK(out.value[c] == doctest::Approx(3.25).epsilon(1e-12));
    }
}

TEST_CASE("a point behind the only camera is all-invalid") {
    Camera cam;
    cam.id = "solo";
    cam.intrinsics = {100.0, 100.0, 32.0, 32.0, 64, 64};
    const CameraRig rig({cam});
    const FeaturePyramid pyr = constant_pyramid(rig, {8}, 4, 1.0);
    const SamplePlan plan = make_uniform_plan({Vec3::Zero()}, 1, 1);
    const AggregateResult out = deformable_aggregate(Vec3(0.0, 0.0, -5.0), plan, pyr, rig);
    CHECK(out.all_invalid);
    CHECK(out.valid_samples == 0);
    CHECK(out.value.norm() == 0.0);
}

TEST_CASE("aggregate matches the straight-line softmax oracle") {
    Rng rng(602);
    const CameraRig rig = make_default_rig();
    const FeaturePyramid pyr = noisy_pyramid(rng, rig, {8, 16, 32, 64}, 4);
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 ref(rng.uniform(-70.0, 70.0), rng.uniform(-70.0, 70.0), rng.uniform(-3.0, 3.0));
        const SamplePlan plan = random_plan(rng, 5, rig.size(), 4, 2.0);
        const AggregateResult out = deformable_aggregate(ref, plan, pyr, rig);
        int n_valid = 0;
        const VecX want = test::aggregate_oracle(ref, plan, pyr, rig, &n_valid);
        CHECK(out.valid_samples == n_valid);
        CHECK(out.all_invalid == (n_valid == 0));
        CHECK((out.value - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("output stays inside the channelwise hull of valid samples") {
    Rng rng(603);
    const CameraRig rig = make_default_rig();
    const FeaturePyramid pyr = noisy_pyramid(rng, rig, {8, 16, 32, 64}, 4);
    int checked = 0;
    for (int trial = 0; trial < 300; ++trial) {
        const Vec3 ref(rng.uniform(-70.0, 70.0), rng.uniform(-70.0, 70.0), rng.uniform(-3.0, 3.0));
        const SamplePlan plan = random_plan(rng, 4, rig.size(), 4, 2.0);
        const AggregateResult out = deformable_aggregate(ref, plan, pyr, rig);
        if (out.all_invalid) continue;
        ++checked;
        VecX lo = VecX::Constant(4, std::numeric_limits<double>::infinity());
        VecX hi = VecX::Constant(4, -std::numeric_limits<double>::infinity());
        for (std::size_t m = 0; m < plan.offsets.size(); ++m) {
            const Vec3 p = ref + plan.offsets[m];
            for (int view = 0; view < rig.size(); ++view) {
                const Projection pr = project_point(p, view, rig);
                if (pr.behind) continue;
                for (int level = 0; level < 4; ++level) {
                    const SampleResult s =
                        bilinear_sample(pyr.views[static_cast<std::size_t>(view)]
                                                [static_cast<std::size_t>(level)],
                                        pr.pixel.u, pr.pixel.v);
                    if (!s.valid) continue;
                    lo = lo.cwiseMin(s.value);
                    hi = hi.cwiseMax(s.value);
                }
            }
        }
        for (int c = 0; c < 4; ++c) {
            CHECK(out.value[c] >= lo[c] - 1e-12);
            CHECK(out.value[c] <= hi[c] + 1e-12);
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("a far query still reaches the finest level when visible") {
    const CameraRig rig = make_default_rig();
    const FeaturePyramid pyr = constant_pyramid(rig, {8, 16, 32, 64}, 4, 1.0);
    // 140 m ahead on the front camera axis, at camera height.
    const Vec3 p(140.0, 0.0, 1.6);
    bool finest = false;
    for (int view = 0; view < rig.size(); ++view) {
        const Projection pr = project_point(p, view, rig);
        if (pr.behind) continue;
        if (!rig.camera(view).intrinsics.pixel_in_bounds(pr.pixel.u, pr.pixel.v)) continue;
        const SampleResult s = bilinear_sample(pyr.views[static_cast<std::size_t>(view)].front(),
                                               pr.pixel.u, pr.pixel.v);
        finest = finest || s.valid;
    }
    CHECK(finest);
}

TEST_CASE("plan validation pins the weight layout") {
    const SamplePlan plan = make_uniform_plan({Vec3::Zero(), Vec3(1, 0, 0)}, 3, 4);
    CHECK(plan.weights.size() == 2u * 3u * 4u);
    CHECK(plan.weight(1, 2, 3) == 0.0);

    SamplePlan bad = plan;
    bad.weights.pop_back();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    SamplePlan empty;
    empty.n_views = 1;
    empty.n_levels = 1;
    CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
    SamplePlan nan = plan;
    nan.weights[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(nan.validate(), std::invalid_argument);

    Rng rng(604);
    const CameraRig rig = test::random_rig(rng, 2);
    const FeaturePyramid pyr = constant_pyramid(rig, {8}, 4, 1.0);
    CHECK_THROWS_AS(deformable_aggregate(Vec3::Zero(), plan, pyr, rig), std::invalid_argument);
}

TEST_SUITE_END();

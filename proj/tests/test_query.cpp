// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "far/query.hpp"
#include "far/rng.hpp"
#include "oracles.hpp"

using namespace far;

namespace {

Range3 test_bounds() {
    Range3 b;
    b.lo = Vec3(-76.2, -76.2, -5.0);
    b.hi = Vec3(76.2, 76.2, 5.0);
    return b;
}

Detection2D make_det(int view, double score, double u0 = 10.0, double v0 = 10.0,
                     double u1 = 30.0, double v1 = 26.0) {
    Detection2D d;
    d.view = view;
    d.u_min = u0;
    d.v_min = v0;
    d.u_max = u1;
    d.v_max = v1;
    d.score = score;
    d.category = "car";
    d.z_2d = VecX::Zero(8);
    return d;
}

Query tagged_query(QueryKind kind, int tag, int dim = 4) {
    Query q;
    q.kind = kind;
    q.embedding = VecX::Zero(dim);
    q.source.det_index = tag;
    return q;
}

}  // namespace

TEST_SUITE_BEGIN("query");

TEST_CASE("score threshold is inclusive and order preserving") {
    const std::vector<Detection2D> dets = {make_det(0, 0.05), make_det(1, 0.10),
                                           make_det(2, 0.50)};
    const auto kept = filter_proposals(dets, 0.1);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].view == 1);
    CHECK(kept[1].view == 2);
}

TEST_CASE("zero threshold is the identity, empty input stays empty") {
    const std::vector<Detection2D> dets = {make_det(0, 0.3), make_det(1, 0.9)};
    CHECK(filter_proposals(dets, 0.0).size() == dets.size());
    CHECK(filter_proposals({}, 0.2).empty());
    CHECK_THROWS_AS(filter_proposals(dets, 1.5), std::invalid_argument);
}

TEST_CASE("filtering is idempotent and monotone in the threshold") {
    Rng rng(401);
    std::vector<Detection2D> dets;
    for (int i = 0; i < 40; ++i) dets.push_back(make_det(i, rng.uniform(0.0, 1.0)));
    const auto once = filter_proposals(dets, 0.4);
    const auto twice = filter_proposals(once, 0.4);
    CHECK(once.size() == twice.size());
    const auto stricter = filter_proposals(dets, 0.6);
    CHECK(stricter.size() <= once.size());
    for (const auto& d : stricter) CHECK(d.score >= 0.6);
}

TEST_CASE("no surviving detections produce no adaptive queries") {
    Rng rng(402);
    const CameraRig rig = test::random_rig(rng, 1);
    const EmbedParams params = make_embed_params(403, 16, 8, 4, 32, test_bounds());
    const DepthBinConfig bins{1.0, 153.0, 64, DepthSpacing::LogUniform};
    const std::vector<Detection2D> dets = {make_det(0, 0.01)};
    std::vector<DepthDistribution> dists(1);
    dists[0].probs = VecX::Zero(bins.n_bins);
    dists[0].probs[5] = 1.0;
    CHECK(generate_adaptive_queries(dets, dists, rig, bins, params, 0.1).empty());
}

TEST_CASE("principal point with a delta depth lands on the optical axis") {
    Camera cam;
    cam.id = "ident";
    cam.intrinsics = {100.0, 100.0, 32.0, 32.0, 64, 64};
    const CameraRig rig({cam});
    Range3 wide;
    wide.lo = Vec3(-100.0, -100.0, -100.0);
    wide.hi = Vec3(100.0, 100.0, 100.0);
    const EmbedParams params = make_embed_params(404, 16, 8, 4, 32, wide);
    const DepthBinConfig bins{5.0, 15.0, 2, DepthSpacing::Uniform};  // centers 7.5, 12.5
    Detection2D det = make_det(0, 0.9, 31.0, 31.0, 33.0, 33.0);  // centered on (32, 32)
    std::vector<DepthDistribution> dists(1);
    dists[0].probs = VecX::Zero(2);
    dists[0].probs[0] = 1.0;
    const auto queries = generate_adaptive_queries({det}, dists, rig, bins, params, 0.1);
    REQUIRE(queries.size() == 1);
    CHECK(queries[0].kind == QueryKind::Adaptive);
    CHECK(queries[0].ref_point.x() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(queries[0].ref_point.y() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(queries[0].ref_point.z() == doctest::Approx(7.5).epsilon(1e-15));
}

TEST_CASE("adaptive batch equals the unprojection composition oracle") {
    Rng rng(405);
    const CameraRig rig = test::random_rig(rng, 3);
    const EmbedParams params = make_embed_params(406, 16, 8, 4, 32, test_bounds());
    const DepthBinConfig bins{1.0, 153.0, 64, DepthSpacing::LogUniform};
    std::vector<Detection2D> dets;
    std::vector<DepthDistribution> dists;
    for (int i = 0; i < 50; ++i) {
        const int view = rng.uniform_int(0, 2);
        const Camera& cam = rig.camera(view);
        const double u0 = rng.uniform(0.0, cam.intrinsics.width - 20.0);
        const double v0 = rng.uniform(0.0, cam.intrinsics.height - 20.0);
        Detection2D d = make_det(view, rng.uniform(0.0, 1.0), u0, v0, u0 + 16.0, v0 + 12.0);
        dets.push_back(d);
        DepthDistribution dist;
        dist.probs = VecX::Zero(bins.n_bins);
        for (int b = 0; b < bins.n_bins; ++b) dist.probs[b] = rng.uniform(0.0, 1.0);
        dist.probs /= dist.probs.sum();
        dists.push_back(dist);
    }
    const double tau = 0.25;
    const auto queries = generate_adaptive_queries(dets, dists, rig, bins, params, tau);

    std::size_t expect = 0;
    std::size_t qi = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        if (dets[i].score < tau) continue;
        const double depth = expected_depth(dists[i], bins);
        const Vec3 want = test::oracle_unproject(dets[i].center_u(), dets[i].center_v(), depth,
                                                 rig.camera(dets[i].view));
        if (!params.bounds.contains(want)) continue;
        ++expect;
        REQUIRE(qi < queries.size());
        CHECK((queries[qi].ref_point - want).norm() < 1e-8 * std::max(1.0, want.norm()));
        CHECK(queries[qi].source.det_index == static_cast<int>(i));
        ++qi;
    }
    CHECK(queries.size() == expect);
}

TEST_CASE("adaptive queries reproject onto their detection centers") {
    Rng rng(407);
    const CameraRig rig = test::random_rig(rng, 2);
    // Wide bounds so no query is dropped and every detection round-trips.
    Range3 wide;
    wide.lo = Vec3(-500.0, -500.0, -500.0);
    wide.hi = Vec3(500.0, 500.0, 500.0);
    const EmbedParams params = make_embed_params(408, 16, 8, 4, 32, wide);
    const DepthBinConfig bins{1.0, 153.0, 64, DepthSpacing::LogUniform};
    std::vector<Detection2D> dets;
    std::vector<DepthDistribution> dists;
    for (int i = 0; i < 30; ++i) {
        const int view = rng.uniform_int(0, 1);
        const Camera& cam = rig.camera(view);
        const double u0 = rng.uniform(0.0, cam.intrinsics.width - 24.0);
        const double v0 = rng.uniform(0.0, cam.intrinsics.height - 24.0);
        dets.push_back(make_det(view, 0.9, u0, v0, u0 + 20.0, v0 + 20.0));
        DepthDistribution dist;
        dist.probs = VecX::Zero(bins.n_bins);
        dist.probs[rng.uniform_int(0, bins.n_bins - 1)] = 1.0;
        dists.push_back(dist);
    }
    const auto queries = generate_adaptive_queries(dets, dists, rig, bins, params, 0.1);
    REQUIRE(queries.size() == dets.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const Projection pr = project_point(queries[i].ref_point, dets[i].view, rig);
        REQUIRE(!pr.behind);
        CHECK(std::fabs(pr.pixel.u - dets[i].center_u()) < 1e-6);
        CHECK(std::fabs(pr.pixel.v - dets[i].center_v()) < 1e-6);
    }
}

TEST_CASE("gt depth mode overrides the decoded distribution") {
    Camera cam;
    cam.id = "ident";
    cam.intrinsics = {100.0, 100.0, 32.0, 32.0, 64, 64};
    const CameraRig rig({cam});
    Range3 wide;
    wide.lo = Vec3(-100.0, -100.0, -100.0);
    wide.hi = Vec3(100.0, 100.0, 100.0);
    const EmbedParams params = make_embed_params(409, 16, 8, 4, 32, wide);
    const DepthBinConfig bins{5.0, 15.0, 2, DepthSpacing::Uniform};
    Detection2D det = make_det(0, 0.9, 31.0, 31.0, 33.0, 33.0);
    std::vector<DepthDistribution> dists(1);
    dists[0].probs = VecX::Zero(2);
    dists[0].probs[1] = 1.0;  // decoded depth would be 12.5
    const std::vector<double> gt_depths = {9.0};
    const auto queries =
        generate_adaptive_queries({det}, dists, rig, bins, params, 0.1, true, &gt_depths);
    REQUIRE(queries.size() == 1);
    CHECK(queries[0].ref_point.z() == doctest::Approx(9.0).epsilon(1e-15));
    CHECK_THROWS_AS(generate_adaptive_queries({det}, dists, rig, bins, params, 0.1, true, nullptr),
                    std::invalid_argument);
}

TEST_CASE("misaligned depth lookup is rejected") {
    Rng rng(410);
    const CameraRig rig = test::random_rig(rng, 1);
    const EmbedParams params = make_embed_params(411, 16, 8, 4, 32, test_bounds());
    const DepthBinConfig bins{1.0, 153.0, 64, DepthSpacing::LogUniform};
    CHECK_THROWS_AS(generate_adaptive_queries({make_det(0, 0.5)}, {}, rig, bins, params, 0.1),
                    std::invalid_argument);
}

TEST_CASE("global queries are seeded, uniform, and counted") {
    const EmbedParams params = make_embed_params(412, 16, 8, 4, 32, test_bounds());
    CHECK(make_global_queries(0, 7, params, params.bounds).empty());

    const auto a = make_global_queries(100, 7, params, params.bounds);
    const auto b = make_global_queries(100, 7, params, params.bounds);
    REQUIRE(a.size() == 100);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK((a[i].ref_point - b[i].ref_point).norm() == 0.0);
        CHECK((a[i].embedding - b[i].embedding).norm() == 0.0);
        CHECK(a[i].kind == QueryKind::Global);
        CHECK(params.bounds.contains(a[i].ref_point));
    }

    const auto big = make_global_queries(10000, 13, params, params.bounds);
    Vec3 mean = Vec3::Zero();
    for (const auto& q : big) mean += q.ref_point;
    mean /= static_cast<double>(big.size());
    const Vec3 extent = params.bounds.extent();
    for (int axis = 0; axis < 3; ++axis)
        CHECK(std::fabs(mean[axis] - params.bounds.center()[axis]) < 0.02 * extent[axis]);
}

TEST_CASE("query set assembly concatenates parts in order") {
    std::vector<Query> global, adaptive, propagated;
    for (int i = 0; i < 644; ++i) global.push_back(tagged_query(QueryKind::Global, i));
    for (int i = 0; i < 92; ++i) adaptive.push_back(tagged_query(QueryKind::Adaptive, 1000 + i));
    const auto all = assemble_query_set(global, adaptive, propagated);
    REQUIRE(all.size() == 736);
    CHECK(all[0].kind == QueryKind::Global);
    CHECK(all[643].kind == QueryKind::Global);
    CHECK(all[644].kind == QueryKind::Adaptive);
    CHECK(all[644].source.det_index == 1000);
    CHECK(all.back().source.det_index == 1091);

    CHECK(assemble_query_set({}, {}, {}).empty());

    std::vector<Query> bad = {tagged_query(QueryKind::Propagated, 0, 8)};
    CHECK_THROWS_AS(assemble_query_set(global, adaptive, bad), std::invalid_argument);
}

TEST_CASE("jsonl fields follow the documented names") {
    const Detection2D det = make_det(2, 0.75);
    const auto jd = detection_to_json(det);
    CHECK(jd.at("view") == 2);
    CHECK(jd.at("box").size() == 4);
    CHECK(jd.at("score") == 0.75);
    CHECK(jd.at("category") == "car");
    CHECK(jd.at("center").size() == 2);

    Query q = tagged_query(QueryKind::Adaptive, 3);
    q.ref_point = Vec3(1.0, 2.0, 3.0);
    q.score = 0.5;
    q.source.view = 1;
    const auto jq = query_to_json(q);
    CHECK(jq.at("kind") == "adaptive");
    CHECK(jq.at("ref_point").size() == 3);
    CHECK(jq.at("score") == 0.5);
    CHECK(jq.at("view") == 1);
}

TEST_SUITE_END();

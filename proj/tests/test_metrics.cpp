// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "far/metrics.hpp"
#include "far/rng.hpp"
#include "oracles.hpp"

using namespace far;

namespace {

Box3D box_at(const Vec3& center, const Vec3& size = Vec3(2.0, 4.0, 1.5), double yaw = 0.0) {
    Box3D b;
    b.center = center;
    b.size = size;
    b.yaw = yaw;
    b.category = "car";
    return b;
}

ScoredBox pred_at(const Vec3& center, double score) {
    ScoredBox p;
    p.box = box_at(center);
    p.score = score;
    return p;
}

std::vector<Box3D> random_gts(Rng& rng, int n) {
    std::vector<Box3D> gts;
    for (int i = 0; i < n; ++i)
        gts.push_back(box_at(Vec3(rng.uniform(-80.0, 80.0), rng.uniform(-80.0, 80.0),
                                  rng.uniform(-1.0, 1.0))));
    return gts;
}

std::vector<ScoredBox> random_preds(Rng& rng, const std::vector<Box3D>& gts, int extra) {
    std::vector<ScoredBox> preds;
    for (const auto& g : gts) {
        if (rng.uniform01() < 0.25) continue;  // missed GT
        preds.push_back(pred_at(g.center + Vec3(rng.gauss(0.0, 1.5), rng.gauss(0.0, 1.5), 0.0),
                                rng.uniform01()));
    }
    for (int i = 0; i < extra; ++i)
        preds.push_back(pred_at(Vec3(rng.uniform(-80.0, 80.0), rng.uniform(-80.0, 80.0), 0.0),
                                rng.uniform01()));
    return preds;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("assignment picks the obvious diagonal") {
    MatX cost(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) cost(i, j) = std::abs(i - j);
    const MatchResult res = hungarian_match(cost);
    REQUIRE(res.pairs.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(res.pairs[static_cast<std::size_t>(i)] == std::make_pair(i, i));
        CHECK(res.pair_costs[static_cast<std::size_t>(i)] == 0.0);
    }
    CHECK(res.total_cost() == 0.0);
    CHECK(res.unmatched_preds.empty());
    CHECK(res.unmatched_gts.empty());
}

TEST_CASE("assignment on a single cell and a known rectangle") {
    MatX one(1, 1);
    one(0, 0) = 3.5;
    const MatchResult single = hungarian_match(one);
    REQUIRE(single.pairs.size() == 1);
    CHECK(single.pairs[0] == std::make_pair(0, 0));
    CHECK(single.total_cost() == 3.5);

    MatX rect(2, 3);
    rect << 4.0, 1.0, 3.0, 2.0, 0.0, 5.0;
    const MatchResult res = hungarian_match(rect);
    REQUIRE(res.pairs.size() == 2);
    CHECK(res.pairs[0] == std::make_pair(0, 1));
    CHECK(res.pairs[1] == std::make_pair(1, 0));
    CHECK(res.total_cost() == 3.0);
    REQUIRE(res.unmatched_gts.size() == 1);
    CHECK(res.unmatched_gts[0] == 2);
    CHECK(res.unmatched_preds.empty());
}

TEST_CASE("assignment equals exhaustive search up to 7x7") {
    Rng rng(901);
    for (int trial = 0; trial < 120; ++trial) {
        const int rows = rng.uniform_int(1, 7);
        const int cols = rng.uniform_int(1, 7);
        MatX cost(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) cost(i, j) = rng.uniform(-4.0, 9.0);
        const MatchResult res = hungarian_match(cost);
        const double want = test::brute_force_assignment_cost(cost);
        CHECK(std::abs(res.total_cost() - want) < 1e-9);

        CHECK(res.pairs.size() == static_cast<std::size_t>(std::min(rows, cols)));
        std::vector<bool> pr(static_cast<std::size_t>(rows), false);
        std::vector<bool> gr(static_cast<std::size_t>(cols), false);
        int prev = -1;
        for (const auto& [p, g] : res.pairs) {
            CHECK(p > prev);
            prev = p;
            CHECK_FALSE(pr[static_cast<std::size_t>(p)]);
            CHECK_FALSE(gr[static_cast<std::size_t>(g)]);
            pr[static_cast<std::size_t>(p)] = true;
            gr[static_cast<std::size_t>(g)] = true;
        }
        CHECK(res.pairs.size() + res.unmatched_preds.size() == static_cast<std::size_t>(rows));
        CHECK(res.pairs.size() + res.unmatched_gts.size() == static_cast<std::size_t>(cols));
    }
}

TEST_CASE("degenerate cost matrices are rejected") {
    CHECK_THROWS_AS(hungarian_match(MatX(0, 3)), std::invalid_argument);
    CHECK_THROWS_AS(hungarian_match(MatX(2, 0)), std::invalid_argument);
    MatX nan = MatX::Zero(2, 2);
    nan(1, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(hungarian_match(nan), std::invalid_argument);
    MatX inf = MatX::Zero(2, 2);
    inf(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(hungarian_match(inf), std::invalid_argument);
}

TEST_CASE("recall is exact on centered and straddling predictions") {
    const std::vector<Box3D> gts = {box_at(Vec3(5.0, 0.0, 0.0)), box_at(Vec3(50.0, 10.0, 0.0))};
    std::vector<ScoredBox> exact = {pred_at(gts[0].center, 0.9), pred_at(gts[1].center, 0.8)};
    const RecallResult hit = recall_at(exact, gts, {0.5, 2.0, 4.0});
    for (double v : hit.values) CHECK(v == 1.0);
    CHECK_FALSE(hit.empty_gts);

    const std::vector<Box3D> one = {box_at(Vec3::Zero())};
    const std::vector<ScoredBox> off = {pred_at(Vec3(3.0, 0.0, 0.0), 0.7)};
    const RecallResult straddle = recall_at(off, one, {2.0, 4.0});
    CHECK(straddle.values[0] == 0.0);
    CHECK(straddle.values[1] == 1.0);
}

TEST_CASE("recall matches the greedy oracle and grows with threshold") {
    Rng rng(902);
    const std::vector<double> thresholds = {0.5, 1.0, 2.0, 4.0, 8.0};
    for (int scene = 0; scene < 50; ++scene) {
        const std::vector<Box3D> gts = random_gts(rng, rng.uniform_int(1, 20));
        const std::vector<ScoredBox> preds = random_preds(rng, gts, rng.uniform_int(0, 6));
        const RecallResult rr = recall_at(preds, gts, thresholds);
        double prev = -1.0;
        for (std::size_t i = 0; i < thresholds.size(); ++i) {
            CHECK(rr.values[i] == test::greedy_recall_oracle(preds, gts, thresholds[i]));
            CHECK(rr.values[i] >= prev);
            prev = rr.values[i];
        }
    }
}

TEST_CASE("recall edge cases and threshold validation") {
    const RecallResult empty_gt = recall_at({pred_at(Vec3::Zero(), 0.5)}, {}, {2.0});
    CHECK(empty_gt.empty_gts);
    CHECK(empty_gt.values[0] == 1.0);

    const RecallResult no_pred = recall_at({}, {box_at(Vec3::Zero())}, {2.0});
    CHECK(no_pred.values[0] == 0.0);

    CHECK_THROWS_AS(recall_at({}, {}, {}), std::invalid_argument);
    CHECK_THROWS_AS(recall_at({}, {}, {2.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(recall_at({}, {}, {0.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(average_precision({}, {}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(average_precision({}, {}, -2.0), std::invalid_argument);
}

TEST_CASE("perfect predictions give unit average precision") {
    const std::vector<Box3D> gts = {box_at(Vec3(0.0, 0.0, 0.0)), box_at(Vec3(10.0, 0.0, 0.0)),
                                    box_at(Vec3(20.0, 0.0, 0.0))};
    std::vector<ScoredBox> preds;
    double s = 0.9;
    for (const auto& g : gts) preds.push_back(pred_at(g.center, s -= 0.1));
    CHECK(average_precision(preds, gts, 2.0) == 1.0);

    // A trailing false positive after full recall does not change AP.
    preds.push_back(pred_at(Vec3(500.0, 0.0, 0.0), 0.1));
    CHECK(average_precision(preds, gts, 2.0) == 1.0);
}

TEST_CASE("the five-prediction curve integrates to 11/16") {
    const std::vector<Box3D> gts = {box_at(Vec3(0.0, 0.0, 0.0)), box_at(Vec3(10.0, 0.0, 0.0)),
                                    box_at(Vec3(20.0, 0.0, 0.0)), box_at(Vec3(30.0, 0.0, 0.0))};
    const std::vector<ScoredBox> preds = {
        pred_at(Vec3(0.0, 0.0, 0.0), 0.9),   pred_at(Vec3(10.0, 0.0, 0.0), 0.8),
        pred_at(Vec3(100.0, 0.0, 0.0), 0.7), pred_at(Vec3(20.0, 0.0, 0.0), 0.6),
        pred_at(Vec3(200.0, 0.0, 0.0), 0.5)};
    CHECK(average_precision(preds, gts, 2.0) == 0.6875);
}

TEST_CASE("average precision is order-determined and bounded by recall") {
    Rng rng(903);
    for (int scene = 0; scene < 30; ++scene) {
        const std::vector<Box3D> gts = random_gts(rng, rng.uniform_int(1, 15));
        std::vector<ScoredBox> preds = random_preds(rng, gts, rng.uniform_int(0, 5));
        const double ap = average_precision(preds, gts, 2.0);
        const RecallResult rr = recall_at(preds, gts, {2.0});
        CHECK(ap <= rr.values[0] + 1e-12);
        CHECK(ap >= 0.0);

        // A strictly monotone score rescale preserves the ranking, so the
        // curve and its integral are bit-identical.
        std::vector<ScoredBox> rescaled = preds;
        for (auto& p : rescaled) p.score = 0.1 + 0.5 * p.score;
        CHECK(average_precision(rescaled, gts, 2.0) == ap);
    }
    CHECK(average_precision({}, {box_at(Vec3::Zero())}, 2.0) == 0.0);
    CHECK(average_precision({pred_at(Vec3::Zero(), 0.5)}, {}, 2.0) == 0.0);
}

TEST_CASE("true-positive errors on hand-built pairs") {
    const Box3D gt = box_at(Vec3(10.0, 5.0, 0.5), Vec3(1.0, 1.0, 1.0), 0.25);
    const TpErrors same = tp_errors({{gt, gt}});
    CHECK(same.defined);
    CHECK(same.ate == 0.0);
    CHECK(same.ase == 0.0);
    CHECK(same.aoe == 0.0);

    Box3D bigger = gt;
    bigger.size = Vec3(2.0, 2.0, 2.0);
    const TpErrors scale = tp_errors({{bigger, gt}});
    CHECK(scale.ase == 0.875);
    CHECK(scale.ate == 0.0);

    Box3D turned = gt;
    turned.yaw = gt.yaw + std::numbers::pi / 2.0;
    CHECK(tp_errors({{turned, gt}}).aoe == doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-12));

    Box3D wrapped = gt;
    wrapped.yaw = std::numbers::pi - 0.1;
    Box3D other = gt;
    other.yaw = -std::numbers::pi + 0.1;
    CHECK(tp_errors({{wrapped, other}}).aoe == doctest::Approx(0.2).epsilon(1e-9));

    CHECK_FALSE(tp_errors({}).defined);
}

TEST_CASE("true-positive errors ignore a common translation") {
    const Vec3 shift(128.0, 64.0, 32.0);
    Box3D pred = box_at(Vec3(1.5, 2.25, 0.5), Vec3(2.0, 4.0, 1.5), 0.5);
    Box3D gt = box_at(Vec3(2.5, 1.25, 0.5), Vec3(2.5, 3.0, 1.0), 0.125);
    const TpErrors base = tp_errors({{pred, gt}});
    pred.center += shift;
    gt.center += shift;
    const TpErrors moved = tp_errors({{pred, gt}});
    CHECK(moved.ate == base.ate);
    CHECK(moved.ase == base.ase);
    CHECK(moved.aoe == base.aoe);
    CHECK(base.ate == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("band reports keep caller order and append the aggregate") {
    Rng rng(904);
    const std::vector<Box3D> gts = random_gts(rng, 30);
    const std::vector<ScoredBox> preds = random_preds(rng, gts, 8);
    const std::vector<RangeBand> bands = {{50.0, 150.0}, {0.0, 50.0}};
    const std::vector<double> thresholds = {2.0, 4.0};
    const MetricsReport report = range_band_metrics(preds, gts, bands, thresholds);

    REQUIRE(report.bands.size() == 3);
    CHECK(report.bands[0].band.lo == 50.0);
    CHECK(report.bands[1].band.lo == 0.0);
    CHECK(report.bands[2].band.lo == 0.0);
    CHECK(report.bands[2].band.hi == 150.0);

    for (std::size_t bi = 0; bi < report.bands.size(); ++bi) {
        const RangeBand& band = report.bands[bi].band;
        std::vector<Box3D> gts_b;
        for (const auto& g : gts)
            if (ground_range(g.center) >= band.lo && ground_range(g.center) < band.hi)
                gts_b.push_back(g);
        std::vector<ScoredBox> preds_b;
        for (const auto& p : preds)
            if (ground_range(p.box.center) >= band.lo && ground_range(p.box.center) < band.hi)
                preds_b.push_back(p);
        CHECK(report.bands[bi].n_gt == static_cast<int>(gts_b.size()));
        CHECK(report.bands[bi].n_pred == static_cast<int>(preds_b.size()));
        const RecallResult rr = recall_at(preds_b, gts_b, thresholds);
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            CHECK(report.bands[bi].per_threshold[t].threshold == thresholds[t]);
            CHECK(report.bands[bi].per_threshold[t].recall == rr.values[t]);
            CHECK(report.bands[bi].per_threshold[t].ap ==
                  average_precision(preds_b, gts_b, thresholds[t]));
        }
    }
}

TEST_CASE("band boundaries are closed below and open above") {
    const std::vector<Box3D> gts = {box_at(Vec3(50.0, 0.0, 0.0)), box_at(Vec3(30.0, 0.0, 0.0))};
    const MetricsReport report =
        range_band_metrics({}, gts, {{0.0, 50.0}, {50.0, 150.0}}, {2.0});
    CHECK(report.bands[0].n_gt == 1);
    CHECK(report.bands[1].n_gt == 1);
    CHECK(report.bands[2].n_gt == 2);
}

TEST_CASE("an empty far band reports vacuous recall") {
    const std::vector<Box3D> gts = {box_at(Vec3(30.0, 0.0, 0.0)), box_at(Vec3(20.0, 5.0, 0.0))};
    const std::vector<ScoredBox> preds = {pred_at(Vec3(30.0, 0.0, 0.0), 0.9),
                                          pred_at(Vec3(20.0, 5.0, 0.0), 0.8)};
    const MetricsReport report =
        range_band_metrics(preds, gts, {{0.0, 50.0}, {50.0, 150.0}}, {2.0});
    CHECK_FALSE(report.bands[0].empty_gts);
    CHECK(report.bands[0].per_threshold[0].recall == 1.0);
    CHECK(report.bands[1].empty_gts);
    CHECK(report.bands[1].per_threshold[0].recall == 1.0);
    CHECK(report.bands[1].n_gt == 0);
    CHECK_FALSE(report.bands[1].errors.defined);
}

TEST_CASE("pair errors are taken at the loosest threshold") {
    const std::vector<Box3D> gts = {box_at(Vec3(100.0, 0.0, 0.0))};
    const std::vector<ScoredBox> preds = {pred_at(Vec3(103.0, 0.0, 0.0), 0.9)};
    const MetricsReport report = range_band_metrics(preds, gts, {{50.0, 150.0}}, {2.0, 4.0});
    CHECK(report.bands[0].per_threshold[0].recall == 0.0);
    CHECK(report.bands[0].per_threshold[1].recall == 1.0);
    CHECK(report.bands[0].errors.defined);
    CHECK(report.bands[0].errors.ate == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("overlapping or inverted bands are rejected") {
    CHECK_THROWS_AS(range_band_metrics({}, {}, {{0.0, 60.0}, {50.0, 150.0}}, {2.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(range_band_metrics({}, {}, {{50.0, 50.0}}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(range_band_metrics({}, {}, {{80.0, 20.0}}, {2.0}), std::invalid_argument);
    CHECK_THROWS_AS(range_band_metrics({}, {}, {}, {2.0}), std::invalid_argument);
}

TEST_CASE("report serialization round trips and the CSV shape is fixed") {
    Rng rng(905);
    const std::vector<Box3D> gts = random_gts(rng, 12);
    const std::vector<ScoredBox> preds = random_preds(rng, gts, 3);
    MetricsReport report =
        range_band_metrics(preds, gts, {{0.0, 50.0}, {50.0, 150.0}}, {1.0, 2.0, 4.0});
    report.variant = "adaptive_plus_global";
    report.seed = 42;
    report.frames = 8;

    const nlohmann::ordered_json j = report.to_json();
    const MetricsReport back = MetricsReport::from_json(j);
    CHECK(back.to_json().dump() == j.dump());
    CHECK(back.variant == report.variant);
    CHECK(back.seed == report.seed);

    const std::string csv = report.to_csv();
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n' ? 1 : 0;
    CHECK(lines == 1 + 3 * 3);
    CHECK(csv.rfind("band,lo,hi,threshold,n_gt,n_pred,recall,ap,ate,ase,aoe\n", 0) == 0);
    CHECK(j.at("bands").size() == 3);
    CHECK(j.at("bands")[0].at("label") == "0-50m");
    CHECK(j.at("bands")[2].at("label") == "0-150m");
}

TEST_SUITE_END();

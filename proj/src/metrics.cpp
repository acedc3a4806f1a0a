// SPDX-License-Identifier: Apache-2.0
#include "far/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace far {

double MatchResult::total_cost() const {
    double acc = 0.0;
    for (double c : pair_costs) acc += c;
    return acc;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Potential-based shortest augmenting path assignment, rows <= cols.
std::vector<int> assign_rows(const MatX& a) {
    const int n = static_cast<int>(a.rows());
    const int m = static_cast<int>(a.cols());
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
        std::vector<bool> used(static_cast<std::size_t>(m) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                                   v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_of_col(static_cast<std::size_t>(m), -1);
    for (int j = 1; j <= m; ++j) row_of_col[static_cast<std::size_t>(j - 1)] = p[static_cast<std::size_t>(j)] - 1;
    return row_of_col;
}

}  // namespace

MatchResult hungarian_match(const MatX& cost) {
    if (cost.rows() == 0 || cost.cols() == 0)
        throw std::invalid_argument("hungarian: empty cost matrix");
    if (cost.hasNaN()) throw std::invalid_argument("hungarian: NaN in cost matrix");
    if (!cost.allFinite()) throw std::invalid_argument("hungarian: nonfinite cost");

    const bool transposed = cost.rows() > cost.cols();
    const MatX a = transposed ? cost.transpose() : cost;
    const std::vector<int> row_of_col = assign_rows(a);

    MatchResult res;
    std::vector<bool> pred_used(static_cast<std::size_t>(cost.rows()), false);
    std::vector<bool> gt_used(static_cast<std::size_t>(cost.cols()), false);
    for (int j = 0; j < static_cast<int>(row_of_col.size()); ++j) {
        const int i = row_of_col[static_cast<std::size_t>(j)];
        if (i < 0) continue;
        const int pred = transposed ? j : i;
        const int gt = transposed ? i : j;
        res.pairs.emplace_back(pred, gt);
        res.pair_costs.push_back(cost(pred, gt));
        pred_used[static_cast<std::size_t>(pred)] = true;
        gt_used[static_cast<std::size_t>(gt)] = true;
    }
    std::sort(res.pairs.begin(), res.pairs.end());
    // Re-derive costs in pair order after the sort.
    res.pair_costs.clear();
    for (const auto& [pred, gt] : res.pairs) res.pair_costs.push_back(cost(pred, gt));
    for (int i = 0; i < static_cast<int>(cost.rows()); ++i)
        if (!pred_used[static_cast<std::size_t>(i)]) res.unmatched_preds.push_back(i);
    for (int j = 0; j < static_cast<int>(cost.cols()); ++j)
        if (!gt_used[static_cast<std::size_t>(j)]) res.unmatched_gts.push_back(j);
    return res;
}

namespace {

std::vector<int> score_order(const std::vector<ScoredBox>& preds) {
    std::vector<int> order(preds.size());
    for (int i = 0; i < static_cast<int>(order.size()); ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return preds[static_cast<std::size_t>(a)].score > preds[static_cast<std::size_t>(b)].score;
    });
    return order;
}

/// Greedy matching in descending score order; each prediction claims
/// its nearest unmatched GT if within the threshold. Returns (pred, gt)
/// pairs in claim order.
std::vector<std::pair<int, int>> greedy_match(const std::vector<ScoredBox>& preds,
                                              const std::vector<Box3D>& gts, double threshold) {
    std::vector<std::pair<int, int>> pairs;
    std::vector<bool> taken(gts.size(), false);
    for (int pi : score_order(preds)) {
        const Vec3& c = preds[static_cast<std::size_t>(pi)].box.center;
        int best = -1;
        double best_d = kInf;
        for (int gi = 0; gi < static_cast<int>(gts.size()); ++gi) {
            if (taken[static_cast<std::size_t>(gi)]) continue;
            const double d = (gts[static_cast<std::size_t>(gi)].center - c).norm();
            if (d < best_d) {
                best_d = d;
                best = gi;
            }
        }
        if (best >= 0 && best_d <= threshold) {
            taken[static_cast<std::size_t>(best)] = true;
            pairs.emplace_back(pi, best);
        }
    }
    return pairs;
}

void check_thresholds(const std::vector<double>& thresholds) {
    if (thresholds.empty()) throw std::invalid_argument("metrics: no thresholds");
    double prev = 0.0;
    for (double t : thresholds) {
        if (!(t > prev)) throw std::invalid_argument("metrics: thresholds must be positive and sorted");
        prev = t;
    }
}

}  // namespace

RecallResult recall_at(const std::vector<ScoredBox>& preds, const std::vector<Box3D>& gts,
                       const std::vector<double>& thresholds) {
    check_thresholds(thresholds);
    RecallResult res;
    if (gts.empty()) {
        res.empty_gts = true;
        res.values.assign(thresholds.size(), 1.0);
        return res;
    }
    for (double t : thresholds) {
        const auto pairs = greedy_match(preds, gts, t);
        res.values.push_back(static_cast<double>(pairs.size()) / static_cast<double>(gts.size()));
    }
    return res;
}

double average_precision(const std::vector<ScoredBox>& preds, const std::vector<Box3D>& gts,
                         double threshold) {
    if (!(threshold > 0.0)) throw std::invalid_argument("metrics: threshold must be positive");
    if (gts.empty() || preds.empty()) return 0.0;

    std::vector<bool> taken(gts.size(), false);
    std::vector<bool> is_tp;
    for (int pi : score_order(preds)) {
        const Vec3& c = preds[static_cast<std::size_t>(pi)].box.center;
        int best = -1;
        double best_d = kInf;
        for (int gi = 0; gi < static_cast<int>(gts.size()); ++gi) {
            if (taken[static_cast<std::size_t>(gi)]) continue;
            const double d = (gts[static_cast<std::size_t>(gi)].center - c).norm();
            if (d < best_d) {
                best_d = d;
                best = gi;
            }
        }
        if (best >= 0 && best_d <= threshold) {
            taken[static_cast<std::size_t>(best)] = true;
            is_tp.push_back(true);
        } else {
            is_tp.push_back(false);
        }
    }

    const std::size_t n = is_tp.size();
    std::vector<double> prec(n), rec(n);
    int tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (is_tp[i]) ++tp;
        prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        rec[i] = static_cast<double>(tp) / static_cast<double>(gts.size());
    }
    // All-points interpolation: each recall increment counts the best
    // precision attainable at or beyond it.
    std::vector<double> env(n);
    double best = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        best = std::max(best, prec[i]);
        env[i] = best;
    }
    double ap = 0.0;
    double prev_rec = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (rec[i] > prev_rec) {
            ap += (rec[i] - prev_rec) * env[i];
            prev_rec = rec[i];
        }
    }
    return ap;
}

TpErrors tp_errors(const std::vector<std::pair<Box3D, Box3D>>& pairs) {
    TpErrors e;
    if (pairs.empty()) return e;
    for (const auto& [pred, gt] : pairs) {
        e.ate += (pred.center - gt.center).norm();
        const Vec3 inter = pred.size.cwiseMin(gt.size);
        const double vi = inter.prod();
        const double vu = pred.size.prod() + gt.size.prod() - vi;
        e.ase += 1.0 - vi / vu;
        double d = std::fabs(std::fmod(pred.yaw - gt.yaw, 2.0 * std::numbers::pi));
        if (d > std::numbers::pi) d = 2.0 * std::numbers::pi - d;
        e.aoe += d;
    }
    const double n = static_cast<double>(pairs.size());
    e.ate /= n;
    e.ase /= n;
    e.aoe /= n;
    e.defined = true;
    return e;
}

std::string RangeBand::label() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g-%gm", lo, hi);
    return buf;
}

namespace {

bool in_band(const RangeBand& band, const Vec3& center) {
    const double r = ground_range(center);
    return r >= band.lo && r < band.hi;
}

BandReport band_report(const std::vector<ScoredBox>& preds, const std::vector<Box3D>& gts,
                       const RangeBand& band, const std::vector<double>& thresholds) {
    std::vector<ScoredBox> preds_b;
    std::vector<Box3D> gts_b;
    for (const auto& p : preds)
        if (in_band(band, p.box.center)) preds_b.push_back(p);
    for (const auto& g : gts)
        if (in_band(band, g.center)) gts_b.push_back(g);

    BandReport rep;
    rep.band = band;
    rep.n_gt = static_cast<int>(gts_b.size());
    rep.n_pred = static_cast<int>(preds_b.size());
    const RecallResult rr = recall_at(preds_b, gts_b, thresholds);
    rep.empty_gts = rr.empty_gts;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        BandThresholdMetrics m;
        m.threshold = thresholds[i];
        m.recall = rr.values[i];
        m.ap = average_precision(preds_b, gts_b, thresholds[i]);
        rep.per_threshold.push_back(m);
    }
    std::vector<std::pair<Box3D, Box3D>> matched;
    for (const auto& [pi, gi] : greedy_match(preds_b, gts_b, thresholds.back()))
        matched.emplace_back(preds_b[static_cast<std::size_t>(pi)].box,
                             gts_b[static_cast<std::size_t>(gi)]);
    rep.errors = tp_errors(matched);
    return rep;
}

}  // namespace

MetricsReport range_band_metrics(const std::vector<ScoredBox>& preds,
                                 const std::vector<Box3D>& gts,
                                 const std::vector<RangeBand>& bands,
                                 const std::vector<double>& thresholds) {
    check_thresholds(thresholds);
    if (bands.empty()) throw std::invalid_argument("metrics: no bands");
    std::vector<RangeBand> sorted = bands;
    std::sort(sorted.begin(), sorted.end(),
              [](const RangeBand& a, const RangeBand& b) { return a.lo < b.lo; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (!(sorted[i].lo < sorted[i].hi))
            throw std::invalid_argument("metrics: band bounds must be ordered");
        if (i > 0 && sorted[i].lo < sorted[i - 1].hi)
            throw std::invalid_argument("metrics: bands overlap");
    }

    MetricsReport report;
    for (const auto& band : bands) report.bands.push_back(band_report(preds, gts, band, thresholds));
    const RangeBand aggregate{sorted.front().lo, sorted.back().hi};
    report.bands.push_back(band_report(preds, gts, aggregate, thresholds));
    return report;
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["variant"] = variant;
    j["seed"] = seed;
    j["frames"] = frames;
    j["bands"] = nlohmann::ordered_json::array();
    for (const auto& b : bands) {
        nlohmann::ordered_json jb;
        jb["label"] = b.band.label();
        jb["lo"] = b.band.lo;
        jb["hi"] = b.band.hi;
        jb["n_gt"] = b.n_gt;
        jb["n_pred"] = b.n_pred;
        jb["empty_gts"] = b.empty_gts;
        jb["thresholds"] = nlohmann::ordered_json::array();
        for (const auto& m : b.per_threshold) {
            nlohmann::ordered_json jm;
            jm["threshold"] = m.threshold;
            jm["recall"] = m.recall;
            jm["ap"] = m.ap;
            jb["thresholds"].push_back(std::move(jm));
        }
        jb["tp_defined"] = b.errors.defined;
        jb["ate"] = b.errors.ate;
        jb["ase"] = b.errors.ase;
        jb["aoe"] = b.errors.aoe;
        j["bands"].push_back(std::move(jb));
    }
    return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.variant = j.at("variant").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.frames = j.at("frames").get<int>();
    for (const auto& jb : j.at("bands")) {
        BandReport b;
        b.band.lo = jb.at("lo").get<double>();
        b.band.hi = jb.at("hi").get<double>();
        b.n_gt = jb.at("n_gt").get<int>();
        b.n_pred = jb.at("n_pred").get<int>();
        b.empty_gts = jb.at("empty_gts").get<bool>();
        for (const auto& jm : jb.at("thresholds")) {
            BandThresholdMetrics m;
            m.threshold = jm.at("threshold").get<double>();
            m.recall = jm.at("recall").get<double>();
            m.ap = jm.at("ap").get<double>();
            b.per_threshold.push_back(m);
        }
        b.errors.defined = jb.at("tp_defined").get<bool>();
        b.errors.ate = jb.at("ate").get<double>();
        b.errors.ase = jb.at("ase").get<double>();
        b.errors.aoe = jb.at("aoe").get<double>();
        r.bands.push_back(std::move(b));
    }
    return r;
}

std::string MetricsReport::to_csv() const {
    std::string csv = "band,lo,hi,threshold,n_gt,n_pred,recall,ap,ate,ase,aoe\n";
    char buf[256];
    for (const auto& b : bands) {
        for (const auto& m : b.per_threshold) {
            std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%d,%d,%.9g,%.9g,", b.band.label().c_str(),
                          b.band.lo, b.band.hi, m.threshold, b.n_gt, b.n_pred, m.recall, m.ap);
            csv += buf;
            if (b.errors.defined) {
                std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", b.errors.ate, b.errors.ase,
                              b.errors.aoe);
                csv += buf;
            } else {
                csv += ",,\n";
            }
        }
    }
    return csv;
}

}  // namespace far

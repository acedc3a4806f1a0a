// SPDX-License-Identifier: Apache-2.0
#include "far/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "far/rng.hpp"

namespace far {

namespace {

// Stream salts keeping the scene, pyramid, detector, and model-weight
// draws independent of each other.
constexpr std::uint64_t kSaltScene = 0x5C;
constexpr std::uint64_t kSaltPyramid = 0x50;
constexpr std::uint64_t kSaltDetector = 0x2D;
constexpr std::uint64_t kSaltEmbed = 0xE3;
constexpr std::uint64_t kSaltGate = 0x6A;
constexpr std::uint64_t kSaltGlobal = 0x61;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double iou2d(double a0, double b0, double a1, double b1,  // box A
             double c0, double d0, double c1, double d1) {  // box B
    const double iw = std::min(a1, c1) - std::max(a0, c0);
    const double ih = std::min(b1, d1) - std::max(b0, d0);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = (a1 - a0) * (b1 - b0) + (c1 - c0) * (d1 - d0) - inter;
    return inter / uni;
}

}  // namespace

void SceneConfig::validate() const {
    if (frames < 1) throw std::invalid_argument("config: need at least one frame");
    if (rig.size() < 1) throw std::invalid_argument("config: empty rig");
    if (!range_box.valid()) throw std::invalid_argument("config: range box not ordered");
    for (int axis = 0; axis < 3; ++axis)
        if (std::abs(range_box.lo[axis] + range_box.hi[axis]) > 1e-9)
            throw std::invalid_argument("config: range box must be symmetric");
    if (gt_per_frame < 0) throw std::invalid_argument("config: negative GT count");
    if (gt_per_frame > 0) {
        if (bands.empty()) throw std::invalid_argument("config: no sampling bands");
        double wsum = 0.0;
        const double max_r = std::hypot(range_box.hi.x(), range_box.hi.y());
        for (const auto& b : bands) {
            if (!(b.lo >= 0.0) || !(b.lo < b.hi))
                throw std::invalid_argument("config: sampling band bounds not ordered");
            if (b.lo >= max_r)
                throw std::invalid_argument("config: sampling band outside the range box");
            if (!(b.weight >= 0.0)) throw std::invalid_argument("config: negative band weight");
            wsum += b.weight;
        }
        if (!(wsum > 0.0)) throw std::invalid_argument("config: band weights sum to zero");
        if (templates.empty()) throw std::invalid_argument("config: no size templates");
    }
    if (!(size_jitter >= 0.0) || !(size_jitter < 0.5))
        throw std::invalid_argument("config: size jitter outside [0, 0.5)");
    for (const auto& t : templates)
        if (!(t.size.array() > 0.0).all())
            throw std::invalid_argument("config: template sizes must be positive");
    if (!(detector.sigma_px >= 0.0) || !(detector.score_noise >= 0.0))
        throw std::invalid_argument("config: detector noise must be nonnegative");
    if (!(detector.drop_max >= 0.0) || !(detector.drop_max <= 1.0))
        throw std::invalid_argument("config: drop_max outside [0, 1]");
    if (!(detector.drop_area_scale > 0.0) || !(detector.score_area_mid > 0.0) ||
        !(detector.score_k > 0.0))
        throw std::invalid_argument("config: detector curve parameters must be positive");
    if (!(detector.score_floor >= 0.0) || !(detector.score_floor < 1.0))
        throw std::invalid_argument("config: score floor outside [0, 1)");
    if (!(depth_noise.a >= 0.0) || !(depth_noise.b >= 0.0))
        throw std::invalid_argument("config: depth noise must be nonnegative");
    depth_bins.validate();
    denoise.validate();
    if (pyramid.strides.empty()) throw std::invalid_argument("config: no pyramid strides");
    int prev = 0;
    for (int s : pyramid.strides) {
        if (s <= prev) throw std::invalid_argument("config: strides must strictly increase");
        prev = s;
        for (const auto& cam : rig.cameras())
            if (cam.intrinsics.width % s != 0 || cam.intrinsics.height % s != 0)
                throw std::invalid_argument("config: stride must divide the image size");
    }
    if (pyramid.channels < 1 || pyramid.lattice_cells < 1)
        throw std::invalid_argument("config: pyramid channels/lattice must be positive");
    if (!(pyramid.noise_amp >= 0.0) || !(pyramid.bump_amp >= 0.0) ||
        !(pyramid.bump_range_decay > 0.0) || !(pyramid.bump_sigma_px > 0.0))
        throw std::invalid_argument("config: pyramid amplitudes invalid");
    if (!(ego.dt > 0.0) || !(ego.speed_mps >= 0.0))
        throw std::invalid_argument("config: ego trajectory invalid");
    if (agg.m_offsets < 1 || !(agg.offset_radius_m > 0.0) || agg.refine_iters < 0 ||
        !(agg.refine_margin >= 0.0))
        throw std::invalid_argument("config: aggregation model invalid");
    if (n_global < 0 || memory_k < 0) throw std::invalid_argument("config: negative counts");
    if (!(tau >= 0.0) || !(tau <= 1.0)) throw std::invalid_argument("config: tau outside [0, 1]");
    if (thresholds.empty()) throw std::invalid_argument("config: no thresholds");
    double tprev = 0.0;
    for (double t : thresholds) {
        if (!(t > tprev)) throw std::invalid_argument("config: thresholds must be sorted positive");
        tprev = t;
    }
    if (metric_bands.empty()) throw std::invalid_argument("config: no metric bands");
    if (embed.dim < 1 || embed.frequencies < 1 || embed.hidden < 1 || gate_hidden < 1)
        throw std::invalid_argument("config: embedding/gate dimensions must be positive");
}

CameraRig make_default_rig() {
    std::vector<Camera> cams;
    const double w = 960, h = 640;
    // 90 degree ring cameras leave 30 degree two-view seams between
    // neighbors; the telephoto doubles up the front wedge.
    const double ring_f = 440.0;
    const char* names[6] = {"ring_front",      "ring_front_left", "ring_rear_left",
                            "ring_rear",       "ring_rear_right", "ring_front_right"};
    auto make = [&](const std::string& id, double psi, double f) {
        Camera cam;
        cam.id = id;
        cam.intrinsics = {f, f, w / 2.0, h / 2.0, static_cast<int>(w), static_cast<int>(h)};
        const double c = std::cos(psi), s = std::sin(psi);
        // Camera x right, y down, z forward; heading psi in the ego
        // frame (x forward, y left, z up).
        cam.pose.rotation.col(0) = Vec3(s, -c, 0.0);
        cam.pose.rotation.col(1) = Vec3(0.0, 0.0, -1.0);
        cam.pose.rotation.col(2) = Vec3(c, s, 0.0);
        cam.pose.translation = Vec3(1.5 * c, 1.5 * s, 1.6);
        return cam;
    };
    for (int k = 0; k < 6; ++k)
        cams.push_back(make(names[k], k * std::numbers::pi / 3.0, ring_f));
    cams.push_back(make("tele_front", 0.0, 3.0 * ring_f));
    return CameraRig(std::move(cams));
}

SceneConfig default_scene_config() {
    SceneConfig cfg;
    cfg.rig = make_default_rig();
    cfg.range_box.lo = Vec3(-76.2, -76.2, -5.0);
    cfg.range_box.hi = Vec3(76.2, 76.2, 5.0);
    cfg.bands = {{4.0, 50.0, 0.45}, {50.0, 105.0, 0.55}};
    cfg.templates = {{"car", Vec3(1.9, 4.6, 1.7)},
                     {"pedestrian", Vec3(0.7, 0.8, 1.8)},
                     {"truck", Vec3(2.6, 8.5, 3.2)}};
    cfg.validate();
    return cfg;
}

namespace {

FeaturePyramid make_frame_pyramid(const SceneConfig& cfg, const std::vector<Box3D>& gts,
                                  std::uint64_t seed) {
    Rng rng(seed);
    const auto& pm = cfg.pyramid;
    FeaturePyramid pyr;
    pyr.views.resize(static_cast<std::size_t>(cfg.rig.size()));
    for (int view = 0; view < cfg.rig.size(); ++view) {
        const Camera& cam = cfg.rig.camera(view);
        auto& levels = pyr.views[static_cast<std::size_t>(view)];
        for (int stride : pm.strides) {
            FeatureLevel level;
            level.stride = stride;
            level.width = cam.intrinsics.width / stride;
            level.height = cam.intrinsics.height / stride;
            level.data.resize(static_cast<Eigen::Index>(level.height) * level.width, pm.channels);

            // Smooth background: a coarse gaussian lattice bilinearly
            // upsampled to the cell grid, independently per channel.
            const int spacing = pm.lattice_cells;
            const int nx = level.width / spacing + 2;
            const int ny = level.height / spacing + 2;
            MatX nodes(static_cast<Eigen::Index>(ny) * nx, pm.channels);
            for (Eigen::Index r = 0; r < nodes.rows(); ++r)
                for (int c = 0; c < pm.channels; ++c) nodes(r, c) = pm.noise_amp * rng.gauss();
            for (int y = 0; y < level.height; ++y)
                for (int x = 0; x < level.width; ++x) {
                    const double gx = (x + 0.5) / spacing;
                    const double gy = (y + 0.5) / spacing;
                    const int x0 = static_cast<int>(std::floor(gx));
                    const int y0 = static_cast<int>(std::floor(gy));
                    const double au = gx - x0;
                    const double av = gy - y0;
                    level.data.row(static_cast<Eigen::Index>(y) * level.width + x) =
                        (1.0 - au) * (1.0 - av) * nodes.row(static_cast<Eigen::Index>(y0) * nx + x0) +
                        au * (1.0 - av) * nodes.row(static_cast<Eigen::Index>(y0) * nx + x0 + 1) +
                        (1.0 - au) * av * nodes.row((static_cast<Eigen::Index>(y0) + 1) * nx + x0) +
                        au * av * nodes.row((static_cast<Eigen::Index>(y0) + 1) * nx + x0 + 1);
                }

            // Bumps at projected GT centers, amplitude saturating in
            // the projected pixel area so distant objects stay faint.
            for (const auto& gt : gts) {
                const Projection cp = project_point(gt.center, view, cfg.rig);
                if (cp.behind) continue;
                bool ok = true;
                double u0 = 1e30, v0 = 1e30, u1 = -1e30, v1 = -1e30;
                for (const Vec3& corner : gt.corners()) {
                    const Projection pr = project_point(corner, view, cfg.rig);
                    if (pr.behind) {
                        ok = false;
                        break;
                    }
                    u0 = std::min(u0, pr.pixel.u);
                    v0 = std::min(v0, pr.pixel.v);
                    u1 = std::max(u1, pr.pixel.u);
                    v1 = std::max(v1, pr.pixel.v);
                }
                if (!ok) continue;
                u0 = std::max(u0, 0.0);
                v0 = std::max(v0, 0.0);
                u1 = std::min(u1, cam.intrinsics.width - 1e-6);
                v1 = std::min(v1, cam.intrinsics.height - 1e-6);
                if (!(u0 < u1) || !(v0 < v1)) continue;
                const double amp =
                    pm.bump_amp * std::exp(-ground_range(gt.center) / pm.bump_range_decay);
                const double gcx = cp.pixel.u / stride - 0.5;
                const double gcy = cp.pixel.v / stride - 0.5;
                const double sc = pm.bump_sigma_px / stride;
                const int xa = std::max(0, static_cast<int>(std::floor(gcx - 3.0 * sc)));
                const int xb = std::min(level.width - 1, static_cast<int>(std::ceil(gcx + 3.0 * sc)));
                const int ya = std::max(0, static_cast<int>(std::floor(gcy - 3.0 * sc)));
                const int yb = std::min(level.height - 1, static_cast<int>(std::ceil(gcy + 3.0 * sc)));
                for (int y = ya; y <= yb; ++y)
                    for (int x = xa; x <= xb; ++x) {
                        const double d2 = (x - gcx) * (x - gcx) + (y - gcy) * (y - gcy);
                        const double w = amp * std::exp(-d2 / (2.0 * sc * sc));
                        level.data.row(static_cast<Eigen::Index>(y) * level.width + x).array() += w;
                    }
            }
            levels.push_back(std::move(level));
        }
    }
    return pyr;
}

}  // namespace

Scene gen_scene(const SceneConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, kSaltScene));

    // World boxes live in the frame-0 ego frame.
    std::vector<Box3D> world;
    const double hx = cfg.range_box.hi.x();
    const double hy = cfg.range_box.hi.y();
    const double max_r = std::hypot(hx, hy);
    double wsum = 0.0;
    for (const auto& b : cfg.bands) wsum += b.weight;
    for (int i = 0; i < cfg.gt_per_frame; ++i) {
        double pick = rng.uniform(0.0, wsum);
        std::size_t bi = 0;
        for (; bi + 1 < cfg.bands.size(); ++bi) {
            if (pick < cfg.bands[bi].weight) break;
            pick -= cfg.bands[bi].weight;
        }
        const auto& band = cfg.bands[bi];
        const double r = rng.uniform(band.lo, std::min(band.hi, max_r));
        double x = 0.0, y = 0.0;
        for (int tries = 0; tries < 1000; ++tries) {
            const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
            x = r * std::cos(theta);
            y = r * std::sin(theta);
            if (std::abs(x) <= hx && std::abs(y) <= hy) break;
        }
        const auto& tpl = cfg.templates[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(cfg.templates.size()) - 1))];
        Box3D box;
        box.category = tpl.category;
        for (int axis = 0; axis < 3; ++axis)
            box.size[axis] = tpl.size[axis] * (1.0 + cfg.size_jitter * rng.symmetric_unit());
        box.yaw = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
        box.center = Vec3(x, y, 0.5 * box.size.z());
        box.validate();
        world.push_back(std::move(box));
    }

    Scene scene;
    scene.cfg = cfg;
    double psi_prev = 0.0;
    Vec3 pos_prev = Vec3::Zero();
    for (int f = 0; f < cfg.frames; ++f) {
        const double psi = f * cfg.ego.yaw_rate_rps * cfg.ego.dt;
        Vec3 pos = Vec3::Zero();
        if (f > 0) {
            // Advance along the previous heading.
            pos = pos_prev + yaw_rotation(psi_prev) * Vec3(cfg.ego.speed_mps * cfg.ego.dt, 0.0, 0.0);
        }
        Frame frame;
        const Mat3 world_to_ego = yaw_rotation(psi).transpose();
        for (const auto& wb : world) {
            Box3D b = wb;
            b.center = world_to_ego * (wb.center - pos);
            b.yaw = wrap_angle(wb.yaw - psi);
            if (!cfg.range_box.contains(b.center)) continue;
            frame.gts.push_back(std::move(b));
        }
        if (f == 0) {
            frame.motion_from_prev = EgoMotion{};
        } else {
            frame.motion_from_prev.rotation = yaw_rotation(psi_prev - psi);
            frame.motion_from_prev.translation = world_to_ego * (pos_prev - pos);
        }
        frame.pyramid = make_frame_pyramid(cfg, frame.gts,
                                           mix_seed(cfg.seed, kSaltPyramid + static_cast<std::uint64_t>(f)));
        scene.frames.push_back(std::move(frame));
        psi_prev = psi;
        pos_prev = pos;
    }
    return scene;
}

namespace {

DepthDistribution two_hot(double dn, const DepthBinConfig& bins) {
    DepthDistribution dist;
    dist.probs = VecX::Zero(bins.n_bins);
    const int b = depth_to_bin(dn, bins);
    const double cb = bin_to_depth(b, bins);
    if (dn >= cb) {
        if (b + 1 < bins.n_bins) {
            const double cn = bin_to_depth(b + 1, bins);
            const double w = (dn - cb) / (cn - cb);
            dist.probs[b] = 1.0 - w;
            dist.probs[b + 1] = w;
        } else {
            dist.probs[b] = 1.0;
        }
    } else {
        if (b > 0) {
            const double cp = bin_to_depth(b - 1, bins);
            const double w = (cb - dn) / (cb - cp);
            dist.probs[b] = 1.0 - w;
            dist.probs[b - 1] = w;
        } else {
            dist.probs[b] = 1.0;
        }
    }
    return dist;
}

}  // namespace

std::vector<FrameDetections> simulate_2d_detector(const Scene& scene, const CameraRig& rig,
                                                  const DetectorModel& noise) {
    const SceneConfig& cfg = scene.cfg;
    std::vector<FrameDetections> out;
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        const Frame& frame = scene.frames[f];
        Rng rng(mix_seed(cfg.seed, kSaltDetector + static_cast<std::uint64_t>(f)));
        FrameDetections fd;
        fd.gt_visible.assign(frame.gts.size(), false);
        for (std::size_t gi = 0; gi < frame.gts.size(); ++gi) {
            const Box3D& gt = frame.gts[gi];
            for (int view = 0; view < rig.size(); ++view) {
                const Camera& cam = rig.camera(view);
                bool ok = true;
                double u0 = 1e30, v0 = 1e30, u1 = -1e30, v1 = -1e30;
                for (const Vec3& corner : gt.corners()) {
                    const Projection pr = project_point(corner, view, rig);
                    if (pr.behind) {
                        ok = false;
                        break;
                    }
                    u0 = std::min(u0, pr.pixel.u);
                    v0 = std::min(v0, pr.pixel.v);
                    u1 = std::max(u1, pr.pixel.u);
                    v1 = std::max(v1, pr.pixel.v);
                }
                if (!ok) continue;
                u0 = std::max(u0, 0.0);
                v0 = std::max(v0, 0.0);
                u1 = std::min(u1, cam.intrinsics.width - 1e-6);
                v1 = std::min(v1, cam.intrinsics.height - 1e-6);
                if (!(u0 < u1) || !(v0 < v1)) continue;
                fd.gt_visible[gi] = true;

                const double area_true = (u1 - u0) * (v1 - v0);
                if (rng.bernoulli(noise.drop_max * std::exp(-area_true / noise.drop_area_scale)))
                    continue;

                double ju0 = u0 + noise.sigma_px * rng.gauss();
                double jv0 = v0 + noise.sigma_px * rng.gauss();
                double ju1 = u1 + noise.sigma_px * rng.gauss();
                double jv1 = v1 + noise.sigma_px * rng.gauss();
                double score_draw = rng.gauss();
                double depth_draw = rng.gauss();
                if (ju0 > ju1) std::swap(ju0, ju1);
                if (jv0 > jv1) std::swap(jv0, jv1);
                ju0 = std::max(ju0, 0.0);
                jv0 = std::max(jv0, 0.0);
                ju1 = std::min(ju1, cam.intrinsics.width - 1e-6);
                jv1 = std::min(jv1, cam.intrinsics.height - 1e-6);
                if (!(ju1 - ju0 > 1e-3) || !(jv1 - jv0 > 1e-3)) continue;

                const double area_obs = (ju1 - ju0) * (jv1 - jv0);
                double score = noise.score_floor +
                               (1.0 - noise.score_floor) *
                                   sigmoid(noise.score_k * std::log(area_obs / noise.score_area_mid));
                score = std::clamp(score + noise.score_noise * score_draw, 0.0, 1.0);

                const double d_true = project_point(gt.center, view, rig).depth;
                const double sigma_d = cfg.depth_noise.a + cfg.depth_noise.b * d_true;
                const double dn = std::clamp(d_true + sigma_d * depth_draw, cfg.depth_bins.d_min,
                                             cfg.depth_bins.d_max);

                Detection2D det;
                det.view = view;
                det.u_min = ju0;
                det.v_min = jv0;
                det.u_max = ju1;
                det.v_max = jv1;
                det.score = score;
                det.category = gt.category;
                const SampleResult zs =
                    bilinear_sample(frame.pyramid.views[static_cast<std::size_t>(view)].front(),
                                    det.center_u(), det.center_v());
                det.z_2d = zs.valid ? zs.value : VecX::Zero(frame.pyramid.channels());
                det.validate();

                fd.dets.push_back(std::move(det));
                fd.depth_dists.push_back(two_hot(dn, cfg.depth_bins));
                fd.gt_depths.push_back(d_true);
                fd.gt_indices.push_back(static_cast<int>(gi));
                fd.iou_truth.push_back(iou2d(ju0, jv0, ju1, jv1, u0, v0, u1, v1));
            }
        }
        out.push_back(std::move(fd));
    }
    return out;
}

std::string to_string(PipelineVariant v) {
    switch (v) {
        case PipelineVariant::GlobalOnly: return "global_only";
        case PipelineVariant::AdaptiveOnly: return "adaptive_only";
        case PipelineVariant::AdaptivePlusGlobal: return "adaptive_plus_global";
    }
    throw std::logic_error("variant: unknown value");
}

PipelineVariant parse_variant(const std::string& s) {
    if (s == "global_only") return PipelineVariant::GlobalOnly;
    if (s == "adaptive_only") return PipelineVariant::AdaptiveOnly;
    if (s == "adaptive_plus_global") return PipelineVariant::AdaptivePlusGlobal;
    throw std::invalid_argument("variant: expected global_only, adaptive_only, or adaptive_plus_global");
}

namespace {

// The first six offsets probe the coordinate axes both ways, so hill
// steps can adjust depth and height, not just the ground plane; extra
// offsets fan out on the ground-plane circle.
std::vector<Vec3> refinement_offsets(const AggregationModel& agg) {
    std::vector<Vec3> offsets;
    const double rho = agg.offset_radius_m;
    const Vec3 axes[6] = {{rho, 0, 0}, {-rho, 0, 0}, {0, rho, 0},
                          {0, -rho, 0}, {0, 0, rho}, {0, 0, -rho}};
    for (int m = 0; m < agg.m_offsets && m < 6; ++m) offsets.push_back(axes[m]);
    for (int m = 6; m < agg.m_offsets; ++m) {
        const double a = 2.0 * std::numbers::pi * (m - 6) / (agg.m_offsets - 6);
        offsets.emplace_back(rho * std::cos(a), rho * std::sin(a), 0.0);
    }
    return offsets;
}

const Vec3& template_size(const SceneConfig& cfg, const std::string& category) {
    for (const auto& t : cfg.templates)
        if (t.category == category) return t.size;
    return cfg.templates.front().size;
}

/// Merges per-frame reports into frame-averaged band metrics. Bands
/// with no GT in any frame keep the empty flag and the defined-empty
/// recall of 1.
MetricsReport merge_reports(const std::vector<MetricsReport>& frames) {
    MetricsReport out;
    out.frames = static_cast<int>(frames.size());
    const std::size_t n_bands = frames.front().bands.size();
    for (std::size_t b = 0; b < n_bands; ++b) {
        BandReport merged;
        merged.band = frames.front().bands[b].band;
        const std::size_t n_thr = frames.front().bands[b].per_threshold.size();
        merged.per_threshold.resize(n_thr);
        for (std::size_t t = 0; t < n_thr; ++t)
            merged.per_threshold[t].threshold = frames.front().bands[b].per_threshold[t].threshold;
        int live_frames = 0;
        int err_frames = 0;
        for (const auto& fr : frames) {
            const BandReport& band = fr.bands[b];
            merged.n_gt += band.n_gt;
            merged.n_pred += band.n_pred;
            if (!band.empty_gts) {
                ++live_frames;
                for (std::size_t t = 0; t < n_thr; ++t) {
                    merged.per_threshold[t].recall += band.per_threshold[t].recall;
                    merged.per_threshold[t].ap += band.per_threshold[t].ap;
                }
            }
            if (band.errors.defined) {
                ++err_frames;
                merged.errors.ate += band.errors.ate;
                merged.errors.ase += band.errors.ase;
                merged.errors.aoe += band.errors.aoe;
            }
        }
        if (live_frames > 0) {
            for (auto& m : merged.per_threshold) {
                m.recall /= live_frames;
                m.ap /= live_frames;
            }
        } else {
            merged.empty_gts = true;
            for (auto& m : merged.per_threshold) m.recall = 1.0;
        }
        if (err_frames > 0) {
            merged.errors.defined = true;
            merged.errors.ate /= err_frames;
            merged.errors.ase /= err_frames;
            merged.errors.aoe /= err_frames;
        }
        out.bands.push_back(std::move(merged));
    }
    return out;
}

}  // namespace

PipelineResult run_pipeline(const Scene& scene, PipelineVariant variant, const SceneConfig& cfg) {
    cfg.validate();
    if (scene.frames.empty()) throw std::invalid_argument("pipeline: empty scene");
    const CameraRig& rig = cfg.rig;
    const int channels = scene.frames.front().pyramid.channels();

    const EmbedParams params =
        make_embed_params(mix_seed(cfg.seed, kSaltEmbed), cfg.embed.dim, channels,
                          cfg.embed.frequencies, cfg.embed.hidden, cfg.range_box);
    const GateParams gate = make_gate_params(mix_seed(cfg.seed, kSaltGate), channels, cfg.gate_hidden);

    PipelineResult result;
    result.detections = simulate_2d_detector(scene, rig, cfg.detector);

    const std::vector<Vec3> offsets = refinement_offsets(cfg.agg);
    const SamplePlan plan = make_uniform_plan(offsets, rig.size(), static_cast<int>(cfg.pyramid.strides.size()));

    // Coverage and 2D recall bands: the metric bands plus the aggregate.
    std::vector<RangeBand> bands = cfg.metric_bands;
    std::sort(bands.begin(), bands.end(),
              [](const RangeBand& a, const RangeBand& b) { return a.lo < b.lo; });
    bands.push_back(RangeBand{bands.front().lo, bands.back().hi});

    std::vector<MetricsReport> frame_reports;
    MatX coverage_sum = MatX::Zero(static_cast<Eigen::Index>(bands.size()),
                                   static_cast<Eigen::Index>(cfg.thresholds.size()));
    VecX coverage_frames = VecX::Zero(static_cast<Eigen::Index>(bands.size()));
    VecX twod_sum = VecX::Zero(static_cast<Eigen::Index>(bands.size()));
    VecX twod_frames = VecX::Zero(static_cast<Eigen::Index>(bands.size()));
    double total_global = 0.0, total_adaptive = 0.0, total_propagated = 0.0;

    QueryMemory memory(cfg.memory_k);
    for (std::size_t f = 0; f < scene.frames.size(); ++f) {
        const Frame& frame = scene.frames[f];
        const FrameDetections& fd = result.detections[f];
        const FeaturePyramid gated = camera_gate(frame.pyramid, rig, gate);

        std::vector<Query> propagated = memory.emit(frame.motion_from_prev, params);
        propagated.erase(std::remove_if(propagated.begin(), propagated.end(),
                                        [&](const Query& q) {
                                            return !cfg.range_box.contains(q.ref_point);
                                        }),
                         propagated.end());

        std::vector<Query> adaptive;
        if (variant != PipelineVariant::GlobalOnly)
            adaptive = generate_adaptive_queries(fd.dets, fd.depth_dists, rig, cfg.depth_bins,
                                                 params, cfg.tau, cfg.use_gt_depth, &fd.gt_depths);
        std::vector<Query> global;
        if (variant != PipelineVariant::AdaptiveOnly)
            global = make_global_queries(
                cfg.n_global, mix_seed(mix_seed(cfg.seed, kSaltGlobal), static_cast<std::uint64_t>(f)),
                params, cfg.range_box);

        std::vector<Query> queries = assemble_query_set(global, adaptive, propagated);
        total_global += static_cast<double>(global.size());
        total_adaptive += static_cast<double>(adaptive.size());
        total_propagated += static_cast<double>(propagated.size());

        // Pre-refinement coverage: nearest query per GT.
        std::vector<double> min_dist(frame.gts.size(), std::numeric_limits<double>::infinity());
        for (std::size_t gi = 0; gi < frame.gts.size(); ++gi)
            for (const auto& q : queries)
                min_dist[gi] = std::min(min_dist[gi], (q.ref_point - frame.gts[gi].center).norm());
        for (std::size_t bi = 0; bi < bands.size(); ++bi) {
            int n_in = 0;
            std::vector<int> within(cfg.thresholds.size(), 0);
            for (std::size_t gi = 0; gi < frame.gts.size(); ++gi) {
                const double r = ground_range(frame.gts[gi].center);
                if (r < bands[bi].lo || r >= bands[bi].hi) continue;
                ++n_in;
                for (std::size_t t = 0; t < cfg.thresholds.size(); ++t)
                    if (min_dist[gi] <= cfg.thresholds[t]) ++within[t];
            }
            if (n_in > 0) {
                coverage_frames[static_cast<Eigen::Index>(bi)] += 1.0;
                for (std::size_t t = 0; t < cfg.thresholds.size(); ++t)
                    coverage_sum(static_cast<Eigen::Index>(bi), static_cast<Eigen::Index>(t)) +=
                        static_cast<double>(within[t]) / n_in;
            }
        }

        // 2D recall per band over GT that project into some view.
        std::vector<double> best_iou(frame.gts.size(), 0.0);
        for (std::size_t d = 0; d < fd.dets.size(); ++d)
            best_iou[static_cast<std::size_t>(fd.gt_indices[d])] =
                std::max(best_iou[static_cast<std::size_t>(fd.gt_indices[d])], fd.iou_truth[d]);
        for (std::size_t bi = 0; bi < bands.size(); ++bi) {
            int n_vis = 0, n_det = 0;
            for (std::size_t gi = 0; gi < frame.gts.size(); ++gi) {
                if (!fd.gt_visible[gi]) continue;
                const double r = ground_range(frame.gts[gi].center);
                if (r < bands[bi].lo || r >= bands[bi].hi) continue;
                ++n_vis;
                if (best_iou[gi] >= 0.5) ++n_det;
            }
            if (n_vis > 0) {
                twod_frames[static_cast<Eigen::Index>(bi)] += 1.0;
                twod_sum[static_cast<Eigen::Index>(bi)] += static_cast<double>(n_det) / n_vis;
            }
        }

        // Feature-agreement energy: per-view excess evidence summed
        // over the views that see the point. Single-view evidence is
        // blind to position along the viewing ray; only multi-view
        // agreement rewards the true 3D center.
        auto probe_energy = [&](const Vec3& p) {
            double total = 0.0;
            bool any = false;
            for (int view = 0; view < rig.size(); ++view) {
                const Projection pr = project_point(p, view, rig);
                if (pr.behind) continue;
                double acc = 0.0;
                int cnt = 0;
                for (const auto& level : gated.views[static_cast<std::size_t>(view)]) {
                    const SampleResult s = bilinear_sample(level, pr.pixel.u, pr.pixel.v);
                    if (s.valid) {
                        acc += s.value.mean();
                        ++cnt;
                    }
                }
                if (cnt == 0) continue;
                any = true;
                total += sigmoid(acc / cnt) - 0.5;
            }
            return any ? total : -1.0;
        };
        std::vector<ScoredBox> preds;
        std::vector<Query> post = queries;
        std::vector<double> post_scores;
        for (auto& q : post) {
            Vec3 refined = q.ref_point;
            double best = probe_energy(refined);
            for (int it = 0; it < cfg.agg.refine_iters; ++it) {
                const double scale = 1.0 / static_cast<double>(1 << it);
                Vec3 best_cand = refined;
                double best_e = best;
                for (const Vec3& off : offsets) {
                    const Vec3 cand = refined + scale * off;
                    const double e = probe_energy(cand);
                    if (e > best_e + cfg.agg.refine_margin) {
                        best_e = e;
                        best_cand = cand;
                    }
                }
                refined = best_cand;
                best = best_e;
            }
            const AggregateResult agg = deformable_aggregate(refined, plan, gated, rig);
            const double score = agg.all_invalid ? 0.0 : sigmoid(2.0 * probe_energy(refined));
            q.ref_point = refined;
            q.score = score;
            post_scores.push_back(score);

            ScoredBox pb;
            pb.box.center = refined;
            pb.box.size = template_size(cfg, q.category);
            pb.box.yaw = 0.0;
            pb.box.category = q.category.empty() ? cfg.templates.front().category : q.category;
            pb.score = score;
            preds.push_back(std::move(pb));
        }

        frame_reports.push_back(range_band_metrics(preds, frame.gts, cfg.metric_bands, cfg.thresholds));
        memory.refill(post, post_scores);

        result.predictions.push_back(std::move(preds));
        result.queries.push_back(std::move(queries));
    }

    result.metrics = merge_reports(frame_reports);
    result.metrics.variant = to_string(variant);
    result.metrics.seed = cfg.seed;

    result.diagnostics.thresholds = cfg.thresholds;
    for (std::size_t bi = 0; bi < bands.size(); ++bi) {
        CoverageBand cb;
        cb.band = bands[bi];
        cb.any_gt = coverage_frames[static_cast<Eigen::Index>(bi)] > 0.0;
        for (std::size_t t = 0; t < cfg.thresholds.size(); ++t)
            cb.coverage.push_back(cb.any_gt
                                      ? coverage_sum(static_cast<Eigen::Index>(bi),
                                                     static_cast<Eigen::Index>(t)) /
                                            coverage_frames[static_cast<Eigen::Index>(bi)]
                                      : 0.0);
        result.diagnostics.coverage.push_back(std::move(cb));

        BandValue tv;
        tv.band = bands[bi];
        tv.any_gt = twod_frames[static_cast<Eigen::Index>(bi)] > 0.0;
        tv.value = tv.any_gt ? twod_sum[static_cast<Eigen::Index>(bi)] /
                                   twod_frames[static_cast<Eigen::Index>(bi)]
                             : 0.0;
        result.diagnostics.two_d_recall.push_back(tv);
    }
    const double nf = static_cast<double>(scene.frames.size());
    result.diagnostics.mean_global = total_global / nf;
    result.diagnostics.mean_adaptive = total_adaptive / nf;
    result.diagnostics.mean_propagated = total_propagated / nf;
    return result;
}

nlohmann::ordered_json Diagnostics::to_json() const {
    nlohmann::ordered_json j;
    j["thresholds"] = thresholds;
    j["coverage"] = nlohmann::ordered_json::array();
    for (const auto& cb : coverage) {
        nlohmann::ordered_json jb;
        jb["label"] = cb.band.label();
        jb["lo"] = cb.band.lo;
        jb["hi"] = cb.band.hi;
        jb["any_gt"] = cb.any_gt;
        jb["coverage"] = cb.coverage;
        j["coverage"].push_back(std::move(jb));
    }
    j["two_d_recall"] = nlohmann::ordered_json::array();
    for (const auto& tv : two_d_recall) {
        nlohmann::ordered_json jb;
        jb["label"] = tv.band.label();
        jb["lo"] = tv.band.lo;
        jb["hi"] = tv.band.hi;
        jb["any_gt"] = tv.any_gt;
        jb["recall"] = tv.value;
        j["two_d_recall"].push_back(std::move(jb));
    }
    j["mean_global"] = mean_global;
    j["mean_adaptive"] = mean_adaptive;
    j["mean_propagated"] = mean_propagated;
    return j;
}

namespace {

/// Minimal multi-series line chart.
std::string svg_chart(const std::string& title, const std::vector<double>& xs,
                      const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const double W = 640, H = 420, ml = 60, mr = 20, mt = 40, mb = 40;
    const char* palette[6] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    double x_min = xs.front(), x_max = xs.back();
    if (x_max <= x_min) x_max = x_min + 1.0;
    auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - y * (H - mt - mb); };  // y in [0, 1]
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\">\n";
    svg += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">%s</text>\n",
                  ml, title.c_str());
    svg += buf;
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                  ml, H - mb, W - mr, H - mb, ml, mt, ml, H - mb);
    svg += buf;
    for (double frac : {0.0, 0.5, 1.0}) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
                      "text-anchor=\"end\">%.1f</text>\n",
                      ml - 6, py(frac) + 4, frac);
        svg += buf;
    }
    for (double x : xs) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\" "
                      "text-anchor=\"middle\">%g</text>\n",
                      px(x), H - mb + 16, x);
        svg += buf;
    }
    for (std::size_t s = 0; s < series.size(); ++s) {
        std::string points;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%g,%g ", px(xs[i]),
                          py(std::clamp(series[s].second[i], 0.0, 1.0)));
            points += buf;
        }
        std::snprintf(buf, sizeof(buf),
                      "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"2\" points=\"%s\"/>\n",
                      palette[s % 6], points.c_str());
        svg += buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"12\" "
                      "fill=\"%s\">%s</text>\n",
                      W - mr - 150.0, mt + 16.0 * (s + 1), palette[s % 6], series[s].first.c_str());
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("emit: cannot open " + path.string());
    out << content;
    if (!out) throw std::runtime_error("emit: write failed for " + path.string());
}

}  // namespace

void emit_report(const MetricsReport& report, const std::string& dir, bool plots,
                 const Diagnostics* diagnostics) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path base(dir);
    write_file(base / "report.json", report.to_json().dump(2) + "\n");
    write_file(base / "report.csv", report.to_csv());
    if (!plots) return;

    if (!report.bands.empty()) {
        std::vector<double> xs;
        for (const auto& m : report.bands.front().per_threshold) xs.push_back(m.threshold);
        std::vector<std::pair<std::string, std::vector<double>>> series;
        for (const auto& b : report.bands) {
            std::vector<double> ys;
            for (const auto& m : b.per_threshold) ys.push_back(m.recall);
            series.emplace_back(b.band.label(), std::move(ys));
        }
        write_file(base / "recall_vs_threshold.svg",
                   svg_chart("recall vs center-distance threshold (m)", xs, series));
    }
    if (diagnostics && !diagnostics->coverage.empty()) {
        std::vector<std::pair<std::string, std::vector<double>>> series;
        for (const auto& cb : diagnostics->coverage)
            series.emplace_back(cb.band.label(), cb.coverage);
        write_file(base / "coverage_vs_threshold.svg",
                   svg_chart("query coverage vs threshold (m)", diagnostics->thresholds, series));
    }
}

namespace {

Range3 range_from_json(const nlohmann::json& j) {
    Range3 r;
    const auto lo = j.at("lo").get<std::vector<double>>();
    const auto hi = j.at("hi").get<std::vector<double>>();
    if (lo.size() != 3 || hi.size() != 3)
        throw std::invalid_argument("config: range lo/hi must have 3 entries");
    r.lo = Vec3(lo[0], lo[1], lo[2]);
    r.hi = Vec3(hi[0], hi[1], hi[2]);
    return r;
}

}  // namespace

SceneConfig SceneConfig::from_json(const nlohmann::json& j) {
    SceneConfig cfg = default_scene_config();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.frames = j.value("frames", cfg.frames);
    if (j.contains("rig")) cfg.rig = CameraRig::from_json(j.at("rig"));
    if (j.contains("range")) cfg.range_box = range_from_json(j.at("range"));
    cfg.gt_per_frame = j.value("gt_per_frame", cfg.gt_per_frame);
    if (j.contains("bands")) {
        cfg.bands.clear();
        for (const auto& jb : j.at("bands"))
            cfg.bands.push_back({jb.at("lo").get<double>(), jb.at("hi").get<double>(),
                                 jb.at("weight").get<double>()});
    }
    cfg.size_jitter = j.value("size_jitter", cfg.size_jitter);
    if (j.contains("size_templates")) {
        cfg.templates.clear();
        // Object iteration in nlohmann is key-sorted, which fixes the
        // template order used by the sampler.
        for (const auto& [cat, jsize] : j.at("size_templates").items()) {
            const auto s = jsize.get<std::vector<double>>();
            if (s.size() != 3) throw std::invalid_argument("config: template size needs 3 entries");
            cfg.templates.push_back({cat, Vec3(s[0], s[1], s[2])});
        }
    }
    if (j.contains("detector")) {
        const auto& jd = j.at("detector");
        cfg.detector.sigma_px = jd.value("sigma_px", cfg.detector.sigma_px);
        cfg.detector.drop_max = jd.value("drop_max", cfg.detector.drop_max);
        cfg.detector.drop_area_scale = jd.value("drop_area_scale", cfg.detector.drop_area_scale);
        cfg.detector.score_floor = jd.value("score_floor", cfg.detector.score_floor);
        cfg.detector.score_k = jd.value("score_k", cfg.detector.score_k);
        cfg.detector.score_area_mid = jd.value("score_area_mid", cfg.detector.score_area_mid);
        cfg.detector.score_noise = jd.value("score_noise", cfg.detector.score_noise);
    }
    if (j.contains("depth_noise")) {
        cfg.depth_noise.a = j.at("depth_noise").value("a", cfg.depth_noise.a);
        cfg.depth_noise.b = j.at("depth_noise").value("b", cfg.depth_noise.b);
    }
    if (j.contains("depth_bins")) cfg.depth_bins = DepthBinConfig::from_json(j.at("depth_bins"));
    if (j.contains("denoise")) cfg.denoise = NoiseSpec::from_json(j.at("denoise"));
    if (j.contains("pyramid")) {
        const auto& jp = j.at("pyramid");
        if (jp.contains("strides")) cfg.pyramid.strides = jp.at("strides").get<std::vector<int>>();
        cfg.pyramid.channels = jp.value("channels", cfg.pyramid.channels);
        cfg.pyramid.noise_amp = jp.value("noise_amp", cfg.pyramid.noise_amp);
        cfg.pyramid.lattice_cells = jp.value("lattice_cells", cfg.pyramid.lattice_cells);
        cfg.pyramid.bump_amp = jp.value("bump_amp", cfg.pyramid.bump_amp);
        cfg.pyramid.bump_range_decay = jp.value("bump_range_decay", cfg.pyramid.bump_range_decay);
        cfg.pyramid.bump_sigma_px = jp.value("bump_sigma_px", cfg.pyramid.bump_sigma_px);
    }
    if (j.contains("ego")) {
        const auto& je = j.at("ego");
        cfg.ego.speed_mps = je.value("speed_mps", cfg.ego.speed_mps);
        cfg.ego.yaw_rate_rps = je.value("yaw_rate_rps", cfg.ego.yaw_rate_rps);
        cfg.ego.dt = je.value("dt", cfg.ego.dt);
    }
    if (j.contains("aggregation")) {
        const auto& ja = j.at("aggregation");
        cfg.agg.m_offsets = ja.value("m_offsets", cfg.agg.m_offsets);
        cfg.agg.offset_radius_m = ja.value("offset_radius_m", cfg.agg.offset_radius_m);
        cfg.agg.refine_iters = ja.value("refine_iters", cfg.agg.refine_iters);
        cfg.agg.refine_margin = ja.value("refine_margin", cfg.agg.refine_margin);
    }
    cfg.n_global = j.value("n_global", cfg.n_global);
    cfg.tau = j.value("tau", cfg.tau);
    cfg.use_gt_depth = j.value("use_gt_depth", cfg.use_gt_depth);
    cfg.memory_k = j.value("memory_k", cfg.memory_k);
    if (j.contains("thresholds")) cfg.thresholds = j.at("thresholds").get<std::vector<double>>();
    if (j.contains("metric_bands")) {
        cfg.metric_bands.clear();
        for (const auto& jb : j.at("metric_bands"))
            cfg.metric_bands.push_back({jb.at("lo").get<double>(), jb.at("hi").get<double>()});
    }
    if (j.contains("embed")) {
        const auto& je = j.at("embed");
        cfg.embed.dim = je.value("dim", cfg.embed.dim);
        cfg.embed.frequencies = je.value("frequencies", cfg.embed.frequencies);
        cfg.embed.hidden = je.value("hidden", cfg.embed.hidden);
    }
    cfg.gate_hidden = j.value("gate_hidden", cfg.gate_hidden);
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json SceneConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["frames"] = frames;
    j["rig"] = rig.to_json();
    j["range"] = {{"lo", {range_box.lo.x(), range_box.lo.y(), range_box.lo.z()}},
                  {"hi", {range_box.hi.x(), range_box.hi.y(), range_box.hi.z()}}};
    j["gt_per_frame"] = gt_per_frame;
    j["bands"] = nlohmann::ordered_json::array();
    for (const auto& b : bands)
        j["bands"].push_back({{"lo", b.lo}, {"hi", b.hi}, {"weight", b.weight}});
    j["size_jitter"] = size_jitter;
    j["size_templates"] = nlohmann::ordered_json::object();
    for (const auto& t : templates)
        j["size_templates"][t.category] = {t.size.x(), t.size.y(), t.size.z()};
    j["detector"] = {{"sigma_px", detector.sigma_px},
                     {"drop_max", detector.drop_max},
                     {"drop_area_scale", detector.drop_area_scale},
                     {"score_floor", detector.score_floor},
                     {"score_k", detector.score_k},
                     {"score_area_mid", detector.score_area_mid},
                     {"score_noise", detector.score_noise}};
    j["depth_noise"] = {{"a", depth_noise.a}, {"b", depth_noise.b}};
    j["depth_bins"] = depth_bins.to_json();
    j["denoise"] = denoise.to_json();
    j["pyramid"] = {{"strides", pyramid.strides},
                    {"channels", pyramid.channels},
                    {"noise_amp", pyramid.noise_amp},
                    {"lattice_cells", pyramid.lattice_cells},
                    {"bump_amp", pyramid.bump_amp},
                    {"bump_range_decay", pyramid.bump_range_decay},
                    {"bump_sigma_px", pyramid.bump_sigma_px}};
    j["ego"] = {{"speed_mps", ego.speed_mps}, {"yaw_rate_rps", ego.yaw_rate_rps}, {"dt", ego.dt}};
    j["aggregation"] = {{"m_offsets", agg.m_offsets},
                        {"offset_radius_m", agg.offset_radius_m},
                        {"refine_iters", agg.refine_iters},
                        {"refine_margin", agg.refine_margin}};
    j["n_global"] = n_global;
    j["tau"] = tau;
    j["use_gt_depth"] = use_gt_depth;
    j["memory_k"] = memory_k;
    j["thresholds"] = thresholds;
    j["metric_bands"] = nlohmann::ordered_json::array();
    for (const auto& b : metric_bands) j["metric_bands"].push_back({{"lo", b.lo}, {"hi", b.hi}});
    j["embed"] = {{"dim", embed.dim}, {"frequencies", embed.frequencies}, {"hidden", embed.hidden}};
    j["gate_hidden"] = gate_hidden;
    return j;
}

SceneConfig SceneConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

}  // namespace far

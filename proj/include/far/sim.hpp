// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "far/aggregation.hpp"
#include "far/boxes.hpp"
#include "far/denoise.hpp"
#include "far/depth_bins.hpp"
#include "far/geometry.hpp"
#include "far/metrics.hpp"
#include "far/pyramid.hpp"
#include "far/query.hpp"
#include "far/temporal.hpp"
#include "far/types.hpp"

namespace far {

/// Fraction of generated GT assigned to a ground-range interval.
struct SamplingBand {
    double lo = 0.0;
    double hi = 0.0;
    double weight = 0.0;
};

struct DetectorModel {
    double sigma_px = 1.0;           // corner jitter
    double drop_max = 0.12;          // drop probability at zero area
    double drop_area_scale = 900.0;  // px^2 decay constant of the drop curve
    double score_floor = 0.02;
    double score_k = 1.2;            // logistic slope in log pixel area
    double score_area_mid = 40.0;    // px^2 at the logistic midpoint
    double score_noise = 0.04;
};

/// Depth estimate noise, standard deviation a + b * depth.
struct DepthNoiseModel {
    double a = 0.5;
    double b = 0.005;
};

struct PyramidModel {
    std::vector<int> strides = {8, 16, 32, 64};
    int channels = 8;
    double noise_amp = 0.3;          // lattice noise std per channel
    int lattice_cells = 8;           // noise lattice spacing, in grid cells
    double bump_amp = 4.0;           // bump height at zero range
    double bump_range_decay = 22.0;  // meters; height falls as exp(-r/decay)
    double bump_sigma_px = 12.0;     // bump radius in full-image pixels
};

struct EgoModel {
    double speed_mps = 8.0;
    double yaw_rate_rps = 0.05;
    double dt = 0.5;
};

struct AggregationModel {
    int m_offsets = 6;  // first 6 are the +-x/+-y/+-z axis probes
    double offset_radius_m = 1.5;
    int refine_iters = 3;
    double refine_margin = 0.008;  // minimum energy gain per hill step
};

struct SizeTemplate {
    std::string category;
    Vec3 size = Vec3::Zero();  // (w, l, h)
};

struct EmbedModel {
    int dim = 32;
    int frequencies = 4;
    int hidden = 64;
};

struct SceneConfig {
    std::uint64_t seed = 1;
    int frames = 8;
    CameraRig rig;
    Range3 range_box;
    int gt_per_frame = 24;  // static world boxes shared by all frames
    std::vector<SamplingBand> bands;
    double size_jitter = 0.1;
    std::vector<SizeTemplate> templates;  // kept sorted by category
    DetectorModel detector;
    DepthNoiseModel depth_noise;
    DepthBinConfig depth_bins;
    NoiseSpec denoise;
    PyramidModel pyramid;
    EgoModel ego;
    AggregationModel agg;
    int n_global = 644;
    double tau = 0.1;
    bool use_gt_depth = false;
    int memory_k = 256;
    std::vector<double> thresholds = {1.0, 2.0, 4.0};
    std::vector<RangeBand> metric_bands = {{0.0, 50.0}, {50.0, 150.0}};
    EmbedModel embed;
    int gate_hidden = 16;

    void validate() const;
    static SceneConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
    static SceneConfig load(const std::string& path);
};

/// 6 wide ring cameras at 60 degree headings plus a telephoto front,
/// all 960x640.
CameraRig make_default_rig();
SceneConfig default_scene_config();

struct Frame {
    std::vector<Box3D> gts;      // ego frame, inside the range box
    FeaturePyramid pyramid;
    EgoMotion motion_from_prev;  // identity on the first frame
};

struct Scene {
    SceneConfig cfg;
    std::vector<Frame> frames;
};

/// World-static GT plus a moving ego; per frame the boxes are
/// re-expressed in the ego frame and the pyramids are rendered as
/// smooth noise plus area-scaled bumps at projected GT centers.
Scene gen_scene(const SceneConfig& cfg);

struct FrameDetections {
    std::vector<Detection2D> dets;
    std::vector<DepthDistribution> depth_dists;
    std::vector<double> gt_depths;   // camera depth of the source GT center
    std::vector<int> gt_indices;     // source GT per detection
    std::vector<double> iou_truth;   // overlap with the noiseless box
    std::vector<bool> gt_visible;    // per GT: projected into some view
};

std::vector<FrameDetections> simulate_2d_detector(const Scene& scene, const CameraRig& rig,
                                                  const DetectorModel& noise);

enum class PipelineVariant { GlobalOnly, AdaptiveOnly, AdaptivePlusGlobal };

std::string to_string(PipelineVariant v);
PipelineVariant parse_variant(const std::string& s);

struct BandValue {
    RangeBand band;
    double value = 0.0;
    bool any_gt = false;
};

struct CoverageBand {
    RangeBand band;
    std::vector<double> coverage;  // aligned with thresholds
    bool any_gt = false;
};

struct Diagnostics {
    std::vector<double> thresholds;
    std::vector<CoverageBand> coverage;  // metric bands plus aggregate
    std::vector<BandValue> two_d_recall;
    double mean_global = 0.0;
    double mean_adaptive = 0.0;
    double mean_propagated = 0.0;

    nlohmann::ordered_json to_json() const;
};

struct PipelineResult {
    std::vector<std::vector<ScoredBox>> predictions;  // per frame
    std::vector<std::vector<Query>> queries;          // per frame, pre-refinement
    std::vector<FrameDetections> detections;          // per frame
    MetricsReport metrics;                            // frame-averaged
    Diagnostics diagnostics;
};

/// Full run over one scene: gating, query assembly, one deformable
/// aggregation pass per query, greedy hill refinement, predictions,
/// temporal memory, and frame-averaged metrics plus coverage
/// diagnostics measured before refinement.
PipelineResult run_pipeline(const Scene& scene, PipelineVariant variant, const SceneConfig& cfg);

/// Writes report.json and report.csv; with plots also two SVG charts.
void emit_report(const MetricsReport& report, const std::string& dir, bool plots = false,
                 const Diagnostics* diagnostics = nullptr);

}  // namespace far

// SPDX-License-Identifier: Apache-2.0
#include "far/depth_bins.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

namespace far {

void DepthBinConfig::validate() const {
    if (!(d_min > 0.0) || !(d_min < d_max))
        throw std::invalid_argument("depth bins: require 0 < d_min < d_max");
    if (n_bins < 2) throw std::invalid_argument("depth bins: n_bins must be >= 2");
}

void DepthDistribution::validate(int n_bins) const {
    if (probs.size() != n_bins)
        throw std::invalid_argument("depth distribution: wrong length");
    if (!probs.allFinite() || (probs.array() < 0.0).any())
        throw std::invalid_argument("depth distribution: weights must be finite and nonnegative");
    if (std::abs(probs.sum() - 1.0) > 1e-9)
        throw std::invalid_argument("depth distribution: weights must sum to 1");
}

double bin_edge(int i, const DepthBinConfig& cfg) {
    cfg.validate();
    if (i < 0 || i > cfg.n_bins) throw std::invalid_argument("depth bins: edge index out of range");
    if (i == 0) return cfg.d_min;
    if (i == cfg.n_bins) return cfg.d_max;
    if (cfg.spacing == DepthSpacing::Uniform)
        return cfg.d_min + (cfg.d_max - cfg.d_min) * (static_cast<double>(i) / cfg.n_bins);
    return cfg.d_min * std::pow(cfg.d_max / cfg.d_min, static_cast<double>(i) / cfg.n_bins);
}

int depth_to_bin(double d, const DepthBinConfig& cfg) {
    cfg.validate();
    if (!(d >= cfg.d_min) || !(d <= cfg.d_max))
        throw std::invalid_argument("depth bins: depth outside [d_min, d_max]");
    // Compare against the materialized edges rather than inverting the
    // spacing formula, so boundary values land in the lower bin exactly.
    std::vector<double> upper(static_cast<std::size_t>(cfg.n_bins));
    for (int b = 0; b < cfg.n_bins; ++b)
        upper[static_cast<std::size_t>(b)] = bin_edge(b + 1, cfg);
    const auto it = std::lower_bound(upper.begin(), upper.end(), d);
    return static_cast<int>(it - upper.begin());
}

double bin_to_depth(int b, const DepthBinConfig& cfg) {
    cfg.validate();
    if (b < 0 || b >= cfg.n_bins) throw std::invalid_argument("depth bins: bin index out of range");
    if (cfg.spacing == DepthSpacing::Uniform) {
        const double w = (cfg.d_max - cfg.d_min) / cfg.n_bins;
        return cfg.d_min + (b + 0.5) * w;
    }
    return cfg.d_min * std::pow(cfg.d_max / cfg.d_min, (b + 0.5) / cfg.n_bins);
}

double expected_depth(const DepthDistribution& dist, const DepthBinConfig& cfg) {
    cfg.validate();
    dist.validate(cfg.n_bins);
    double acc = 0.0;
    for (int b = 0; b < cfg.n_bins; ++b) acc += dist.probs[b] * bin_to_depth(b, cfg);
    return acc;
}

double local_bin_width(double d, const DepthBinConfig& cfg) {
    cfg.validate();
    if (!(d >= cfg.d_min) || !(d <= cfg.d_max))
        throw std::invalid_argument("depth bins: depth outside [d_min, d_max]");
    if (cfg.spacing == DepthSpacing::Uniform) return (cfg.d_max - cfg.d_min) / cfg.n_bins;
    // Width of the log-uniform scale at depth d. With ratio rho between
    // consecutive edges, a bin starting at d spans d*(rho - 1); using the
    // analytic form keeps the width a smooth function of d, so width
    // ratios between depths reduce to the depth ratio exactly.
    const double rho = std::pow(cfg.d_max / cfg.d_min, 1.0 / cfg.n_bins);
    return d * (rho - 1.0);
}

DepthBinConfig DepthBinConfig::from_json(const nlohmann::json& j) {
    DepthBinConfig cfg;
    cfg.d_min = j.value("d_min", cfg.d_min);
    cfg.d_max = j.value("d_max", cfg.d_max);
    cfg.n_bins = j.value("n_bins", cfg.n_bins);
    if (j.contains("spacing")) {
        const std::string s = j.at("spacing").get<std::string>();
        if (s == "uniform")
            cfg.spacing = DepthSpacing::Uniform;
        else if (s == "log_uniform" || s == "log-uniform")
            cfg.spacing = DepthSpacing::LogUniform;
        else
            throw std::invalid_argument("depth bins: unknown spacing " + s);
    }
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json DepthBinConfig::to_json() const {
    nlohmann::ordered_json j;
    j["d_min"] = d_min;
    j["d_max"] = d_max;
    j["n_bins"] = n_bins;
    j["spacing"] = spacing == DepthSpacing::Uniform ? "uniform" : "log_uniform";
    return j;
}

}  // namespace far

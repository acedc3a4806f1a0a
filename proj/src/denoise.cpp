// SPDX-License-Identifier: Apache-2.0
#include "far/denoise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace far {

void NoiseSpec::validate() const {
    if (groups < 1) throw std::invalid_argument("denoise: need at least one group");
    if (negatives_per_group < 0) throw std::invalid_argument("denoise: negative K");
    if (!(lambda > 0.0)) throw std::invalid_argument("denoise: lambda must be positive");
}

Vec3 positive_offset(const Box3D& box, Rng& rng) {
    box.validate();
    Vec3 u;
    for (int axis = 0; axis < 3; ++axis) u[axis] = rng.symmetric_unit();
    const Vec3 local = 0.5 * u.cwiseProduct(box.size);
    return yaw_rotation(box.yaw) * local;
}

double noise_magnitude(double r, const NoiseSpec& spec) {
    spec.validate();
    if (!(r >= 0.0)) throw std::invalid_argument("denoise: range must be nonnegative");
    switch (spec.form) {
        case NoiseForm::Log: return spec.lambda * std::log1p(r);
        case NoiseForm::Linear: return spec.lambda * r;
        case NoiseForm::Sqrt: return spec.lambda * std::sqrt(r);
        case NoiseForm::Fixed: return spec.lambda;
    }
    throw std::logic_error("denoise: unknown form");
}

Vec3 negative_offset(const Vec3& center, const NoiseSpec& spec, Rng& rng) {
    const double m = noise_magnitude(ground_range(center), spec);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return Vec3(m * std::cos(theta), m * std::sin(theta), 0.0);
}

std::pair<std::vector<DenoiseGroup>, std::vector<DenoiseTarget>> make_noise_groups(
    const std::vector<Box3D>& gts, const NoiseSpec& spec, const EmbedParams& params,
    std::uint64_t base_seed) {
    spec.validate();
    params.validate();
    std::vector<DenoiseGroup> groups;
    std::vector<DenoiseTarget> targets;
    groups.reserve(gts.size() * static_cast<std::size_t>(spec.groups));
    for (std::size_t i = 0; i < gts.size(); ++i) {
        const Box3D& gt = gts[i];
        gt.validate();
        Rng rng(base_seed ^ static_cast<std::uint64_t>(i));
        for (int g = 0; g < spec.groups; ++g) {
            DenoiseGroup group;
            group.gt_index = static_cast<int>(i);

            Query pos;
            pos.kind = QueryKind::DenoisePositive;
            pos.ref_point = gt.center + positive_offset(gt, rng);
            pos.embedding = pos_embed(pos.ref_point, params);
            pos.score = 1.0;
            pos.category = gt.category;
            pos.source.gt_index = static_cast<int>(i);
            pos.source.noise_group = g;
            group.positive = std::move(pos);

            DenoiseTarget pos_target;
            pos_target.is_positive = true;
            pos_target.regression = gt;
            pos_target.class_target = 1.0;
            targets.push_back(std::move(pos_target));

            for (int k = 0; k < spec.negatives_per_group; ++k) {
                Query neg;
                neg.kind = QueryKind::DenoiseNegative;
                neg.ref_point = gt.center + negative_offset(gt.center, spec, rng);
                neg.embedding = pos_embed(neg.ref_point, params);
                neg.score = 0.0;
                neg.category = gt.category;
                neg.source.gt_index = static_cast<int>(i);
                neg.source.noise_group = g;
                group.negatives.push_back(std::move(neg));

                DenoiseTarget neg_target;
                neg_target.is_positive = false;
                neg_target.class_target = 0.0;
                targets.push_back(std::move(neg_target));
            }
            groups.push_back(std::move(group));
        }
    }
    return {std::move(groups), std::move(targets)};
}

std::vector<double> separation_margin(const std::vector<DenoiseGroup>& groups,
                                      const std::vector<Box3D>& gts) {
    std::vector<double> margins;
    for (const auto& group : groups) {
        if (group.gt_index < 0 || group.gt_index >= static_cast<int>(gts.size()))
            throw std::invalid_argument("denoise: group references unknown GT index");
        const Box3D& gt = gts[static_cast<std::size_t>(group.gt_index)];
        for (const auto& neg : group.negatives)
            margins.push_back((neg.ref_point - gt.center).norm() - gt.half_diagonal());
    }
    return margins;
}

NoiseSpec NoiseSpec::from_json(const nlohmann::json& j) {
    NoiseSpec spec;
    if (j.contains("form")) {
        const std::string f = j.at("form").get<std::string>();
        if (f == "log")
            spec.form = NoiseForm::Log;
        else if (f == "linear")
            spec.form = NoiseForm::Linear;
        else if (f == "sqrt")
            spec.form = NoiseForm::Sqrt;
        else if (f == "fixed")
            spec.form = NoiseForm::Fixed;
        else
            throw std::invalid_argument("denoise: unknown form " + f);
    }
    spec.lambda = j.value("lambda", spec.lambda);
    spec.groups = j.value("groups", spec.groups);
    spec.negatives_per_group = j.value("negatives_per_group", spec.negatives_per_group);
    spec.validate();
    return spec;
}

nlohmann::ordered_json NoiseSpec::to_json() const {
    nlohmann::ordered_json j;
    switch (form) {
        case NoiseForm::Log: j["form"] = "log"; break;
        case NoiseForm::Linear: j["form"] = "linear"; break;
        case NoiseForm::Sqrt: j["form"] = "sqrt"; break;
        case NoiseForm::Fixed: j["form"] = "fixed"; break;
    }
    j["lambda"] = lambda;
    j["groups"] = groups;
    j["negatives_per_group"] = negatives_per_group;
    return j;
}

}  // namespace far

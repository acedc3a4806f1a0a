// SPDX-License-Identifier: Apache-2.0
#include "far/geometry.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace far {

void Intrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
        throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
        throw std::invalid_argument("intrinsics: principal point outside image");
}

void Pose::validate() const {
    const Mat3 gram = rotation.transpose() * rotation;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw std::invalid_argument("pose: rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument("pose: rotation determinant is not +1");
    if (!translation.allFinite())
        throw std::invalid_argument("pose: translation is not finite");
}

CameraRig::CameraRig(std::vector<Camera> cameras) : cameras_(std::move(cameras)) {
    if (cameras_.empty()) throw std::invalid_argument("rig: no cameras");
    for (std::size_t i = 0; i < cameras_.size(); ++i) {
        cameras_[i].intrinsics.validate();
        cameras_[i].pose.validate();
        for (std::size_t j = 0; j < i; ++j)
            if (cameras_[j].id == cameras_[i].id)
                throw std::invalid_argument("rig: duplicate camera id " + cameras_[i].id);
    }
}

const Camera& CameraRig::camera(int view) const {
    if (view < 0 || view >= size())
        throw std::invalid_argument("rig: unknown view index " + std::to_string(view));
    return cameras_[static_cast<std::size_t>(view)];
}

int CameraRig::index_of(const std::string& id) const {
    for (int i = 0; i < size(); ++i)
        if (cameras_[static_cast<std::size_t>(i)].id == id) return i;
    return -1;
}

CameraRig CameraRig::from_json(const nlohmann::json& j) {
    std::vector<Camera> cams;
    for (const auto& jc : j.at("cameras")) {
        Camera c;
        c.id = jc.at("id").get<std::string>();
        c.intrinsics.fx = jc.at("fx").get<double>();
        c.intrinsics.fy = jc.at("fy").get<double>();
        c.intrinsics.cx = jc.at("cx").get<double>();
        c.intrinsics.cy = jc.at("cy").get<double>();
        c.intrinsics.width = jc.at("width").get<int>();
        c.intrinsics.height = jc.at("height").get<int>();
        const auto rot = jc.at("rotation").get<std::vector<double>>();
        const auto tr = jc.at("translation").get<std::vector<double>>();
        if (rot.size() != 9 || tr.size() != 3)
            throw std::invalid_argument("rig: rotation must have 9 entries, translation 3");
        for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 3; ++col)
                c.pose.rotation(r, col) = rot[static_cast<std::size_t>(3 * r + col)];
        c.pose.translation = Vec3(tr[0], tr[1], tr[2]);
        cams.push_back(std::move(c));
    }
    return CameraRig(std::move(cams));
}

nlohmann::ordered_json CameraRig::to_json() const {
    nlohmann::ordered_json j;
    j["cameras"] = nlohmann::ordered_json::array();
    for (const auto& c : cameras_) {
        nlohmann::ordered_json jc;
        jc["id"] = c.id;
        jc["fx"] = c.intrinsics.fx;
        jc["fy"] = c.intrinsics.fy;
        jc["cx"] = c.intrinsics.cx;
        jc["cy"] = c.intrinsics.cy;
        jc["width"] = c.intrinsics.width;
        jc["height"] = c.intrinsics.height;
        std::vector<double> rot(9);
        for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 3; ++col)
                rot[static_cast<std::size_t>(3 * r + col)] = c.pose.rotation(r, col);
        jc["rotation"] = rot;
        jc["translation"] = std::vector<double>{c.pose.translation.x(),
                                               c.pose.translation.y(),
                                               c.pose.translation.z()};
        j["cameras"].push_back(std::move(jc));
    }
    return j;
}

CameraRig CameraRig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open rig file " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

Vec3 unproject_pixel(const Pixel& pix, double depth, const CameraRig& rig) {
    const Camera& cam = rig.camera(pix.view);
    if (!(depth > 0.0))
        throw std::invalid_argument("unproject: depth must be positive");
    if (!cam.intrinsics.pixel_in_bounds(pix.u, pix.v))
        throw std::invalid_argument("unproject: pixel outside image bounds");
    const Vec3 p_cam((pix.u - cam.intrinsics.cx) / cam.intrinsics.fx * depth,
                     (pix.v - cam.intrinsics.cy) / cam.intrinsics.fy * depth,
                     depth);
    return cam.pose.rotation * p_cam + cam.pose.translation;
}

Projection project_point(const Vec3& p, int view, const CameraRig& rig) {
    const Camera& cam = rig.camera(view);
    const Vec3 p_cam = cam.pose.rotation.transpose() * (p - cam.pose.translation);
    Projection out;
    out.pixel.view = view;
    out.depth = p_cam.z();
    if (p_cam.z() <= kBehindEps) {
        out.behind = true;
        return out;
    }
    out.pixel.u = cam.intrinsics.fx * p_cam.x() / p_cam.z() + cam.intrinsics.cx;
    out.pixel.v = cam.intrinsics.fy * p_cam.y() / p_cam.z() + cam.intrinsics.cy;
    return out;
}

std::vector<ViewHit> visible_views(const Vec3& p, const CameraRig& rig) {
    std::vector<ViewHit> hits;
    for (int view = 0; view < rig.size(); ++view) {
        const Projection proj = project_point(p, view, rig);
        if (proj.behind) continue;
        if (!rig.camera(view).intrinsics.pixel_in_bounds(proj.pixel.u, proj.pixel.v)) continue;
        hits.push_back({view, proj.pixel, proj.depth});
    }
    return hits;
}

}  // namespace far

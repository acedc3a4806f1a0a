// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "far/types.hpp"

namespace far {

/// Ideal pinhole intrinsics. No distortion model.
struct Intrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const;
    bool pixel_in_bounds(double u, double v) const {
        return u >= 0.0 && u < width && v >= 0.0 && v < height;
    }
};

/// Camera-to-ego rigid transform. `rotation` maps camera axes into the
/// ego frame; the camera center in ego coordinates is `translation`.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    // Orthonormality and det(+1) checked to 1e-9.
    void validate() const;
};

struct Camera {
    std::string id;
    Intrinsics intrinsics;
    Pose pose;
};

/// Ordered set of calibrated cameras forming the surround view.
class CameraRig {
public:
    CameraRig() = default;
    explicit CameraRig(std::vector<Camera> cameras);

    int size() const { return static_cast<int>(cameras_.size()); }
    const Camera& camera(int view) const;
    const std::vector<Camera>& cameras() const { return cameras_; }

    /// Index of the camera with this id, or -1.
    int index_of(const std::string& id) const;

    static CameraRig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
    static CameraRig load(const std::string& path);

private:
    std::vector<Camera> cameras_;
};

/// Continuous pixel coordinate in one view of the rig.
struct Pixel {
    double u = 0.0;
    double v = 0.0;
    int view = -1;
};

struct Projection {
    Pixel pixel;
    double depth = 0.0;   // camera-frame z, meters
    bool behind = false;  // camera-frame z <= kBehindEps
};

struct ViewHit {
    int view = -1;
    Pixel pixel;
    double depth = 0.0;
};

// Points closer to the image plane than this are treated as behind the
// camera to keep the perspective division bounded.
inline constexpr double kBehindEps = 1e-9;

/// Back-projects a pixel at a given camera depth into the ego frame:
/// intrinsic back-projection to the camera ray, then the camera-to-ego
/// transform. Throws on unknown view, nonpositive depth, or a pixel
/// outside the image bounds.
Vec3 unproject_pixel(const Pixel& pix, double depth, const CameraRig& rig);

/// Projects an ego-frame point into one view. Does not clamp to the
/// image bounds; `behind` is set when the camera-frame depth is <= kBehindEps
/// (pixel content is unspecified in that case).
Projection project_point(const Vec3& p, int view, const CameraRig& rig);

/// Every view where `p` projects in front of the camera and inside the
/// image bounds, in rig order.
std::vector<ViewHit> visible_views(const Vec3& p, const CameraRig& rig);

}  // namespace far

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

#include "far/types.hpp"

namespace far {

/// Oriented 3D bounding box. The box frame has x along width, y along
/// length, z along height; yaw rotates the box frame about ego z.
struct Box3D {
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3::Zero();  // (w, l, h), meters
    double yaw = 0.0;          // radians, in [-pi, pi)
    std::string category;

    void validate() const;

    double half_diagonal() const { return 0.5 * size.norm(); }

    /// The 8 corners in the ego frame, box-frame sign order
    /// (-,-,-), (+,-,-), (-,+,-), (+,+,-), then the same with +z.
    std::array<Vec3, 8> corners() const;
};

/// Rotation of the box frame into the ego frame.
Mat3 yaw_rotation(double yaw);

/// Point-in-box test in the box frame. `strict` excludes the faces.
bool box_contains(const Box3D& box, const Vec3& p, bool strict = false);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

}  // namespace far

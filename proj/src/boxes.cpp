// SPDX-License-Identifier: Apache-2.0
#include "far/boxes.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace far {

void Box3D::validate() const {
    if (!(size.array() > 0.0).all())
        throw std::invalid_argument("box: size components must be positive");
    if (!(yaw >= -std::numbers::pi) || !(yaw < std::numbers::pi))
        throw std::invalid_argument("box: yaw must lie in [-pi, pi)");
    if (!center.allFinite()) throw std::invalid_argument("box: center must be finite");
}

Mat3 yaw_rotation(double yaw) {
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    Mat3 r;
    r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
    return r;
}

std::array<Vec3, 8> Box3D::corners() const {
    const Mat3 r = yaw_rotation(yaw);
    const Vec3 h = 0.5 * size;
    std::array<Vec3, 8> out;
    int i = 0;
    for (double sz : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0})
            for (double sx : {-1.0, 1.0})
                out[i++] = center + r * Vec3(sx * h.x(), sy * h.y(), sz * h.z());
    return out;
}

bool box_contains(const Box3D& box, const Vec3& p, bool strict) {
    const Vec3 q = yaw_rotation(box.yaw).transpose() * (p - box.center);
    const Vec3 h = 0.5 * box.size;
    if (strict) return (q.array().abs() < h.array()).all();
    return (q.array().abs() <= h.array()).all();
}

double wrap_angle(double a) {
    const double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(a + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    return w - std::numbers::pi;
}

}  // namespace far

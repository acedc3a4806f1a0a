// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

namespace far {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Axis-aligned 3D region, used for the perception range and for
/// coordinate normalization inside embeddings.
struct Range3 {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    bool contains(const Vec3& p) const {
        return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    Vec3 center() const { return 0.5 * (lo + hi); }
    Vec3 extent() const { return hi - lo; }
    bool valid() const { return (lo.array() < hi.array()).all(); }
};

/// Ground-plane distance from the ego origin.
inline double ground_range(const Vec3& p) { return std::hypot(p.x(), p.y()); }

}  // namespace far

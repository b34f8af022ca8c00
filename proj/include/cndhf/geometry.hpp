#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <limits>

namespace cndhf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Half-open-free axis-aligned box; empty when min > max on any axis.
struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  [[nodiscard]] Vec3 extent() const { return max - min; }
  [[nodiscard]] Vec3 center() const { return 0.5 * (min + max); }
};

}  // namespace cndhf

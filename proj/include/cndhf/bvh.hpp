#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "cndhf/mesh.hpp"

namespace cndhf {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  /// Normalizes `direction`.
  static Ray through(const Vec3& origin, const Vec3& direction) { return {origin, direction.normalized()}; }
  [[nodiscard]] Vec3 at(double t) const { return origin + t * direction; }
};

inline constexpr std::uint32_t kNoTriangle = 0xffffffffu;

struct RayHit {
  std::uint32_t triangle = 0;
  double t = 0.0;
};

/// Watertight ray/triangle test. Rays through a shared edge report the hit on
/// exactly one of the two triangles; rays coplanar with the triangle miss.
std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c);

/// Reference intersectors over every triangle; used as test oracles.
std::optional<RayHit> intersect_brute_force(const TriangleMesh& mesh, const Ray& ray);
std::vector<RayHit> all_hits_brute_force(const TriangleMesh& mesh, const Ray& ray);
bool occluded_brute_force(const TriangleMesh& mesh, const Ray& ray, std::uint32_t ignore = kNoTriangle);

/// Binary bounding-volume hierarchy over a mesh. Immutable after construction;
/// queries are const and may run concurrently. The mesh must outlive the BVH.
class Bvh {
 public:
  explicit Bvh(const TriangleMesh& mesh);
  explicit Bvh(TriangleMesh&&) = delete;

  /// Nearest hit with 0 <= t <= t_max; ties resolve to the lower triangle id.
  [[nodiscard]] std::optional<RayHit> intersect(const Ray& ray,
                                                double t_max = std::numeric_limits<double>::infinity()) const;
  /// True if any triangle other than `ignore` is hit with 0 <= t <= t_max.
  [[nodiscard]] bool occluded(const Ray& ray, double t_max = std::numeric_limits<double>::infinity(),
                              std::uint32_t ignore = kNoTriangle) const;
  /// Every hit with t >= 0, sorted by (t, triangle).
  [[nodiscard]] std::vector<RayHit> all_hits(const Ray& ray) const;

  [[nodiscard]] const TriangleMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: first primitive; interior: right child
    std::uint32_t count = 0;  // 0 for interior nodes
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids);
  template <class Visit>
  void traverse(const Ray& ray, double& t_max, Visit&& visit) const;

  const TriangleMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

}  // namespace cndhf

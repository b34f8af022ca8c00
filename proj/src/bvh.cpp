#include "cndhf/bvh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace cndhf {

namespace {

constexpr std::uint32_t kLeafSize = 4;

// Woop, Benthin & Wald style ray-space setup shared by every triangle test of one ray.
struct RaySpace {
  int kx, ky, kz;
  double sx, sy, sz;

  explicit RaySpace(const Vec3& d) {
    d.cwiseAbs().maxCoeff(&kz);
    kx = (kz + 1) % 3;
    ky = (kx + 1) % 3;
    if (d[kz] < 0.0) std::swap(kx, ky);
    sx = d[kx] / d[kz];
    sy = d[ky] / d[kz];
    sz = 1.0 / d[kz];
  }
};

// Tie-break for a point exactly on an edge: accept iff the winding-oriented
// edge points "up" (or "right" when horizontal) in the sheared 2D frame.
bool owns_edge(double ex, double ey, double winding) {
  ex *= winding;
  ey *= winding;
  return ey > 0.0 || (ey == 0.0 && ex > 0.0);
}

std::optional<double> intersect_in_space(const RaySpace& rs, const Vec3& o, const Vec3& a, const Vec3& b,
                                         const Vec3& c) {
  const Vec3 A = a - o, B = b - o, C = c - o;
  const double ax = A[rs.kx] - rs.sx * A[rs.kz], ay = A[rs.ky] - rs.sy * A[rs.kz];
  const double bx = B[rs.kx] - rs.sx * B[rs.kz], by = B[rs.ky] - rs.sy * B[rs.kz];
  const double cx = C[rs.kx] - rs.sx * C[rs.kz], cy = C[rs.ky] - rs.sy * C[rs.kz];

  const double u = cx * by - cy * bx;  // edge b -> c
  const double v = ax * cy - ay * cx;  // edge c -> a
  const double w = bx * ay - by * ax;  // edge a -> b
  if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) return std::nullopt;

  const double det = u + v + w;
  if (det == 0.0) return std::nullopt;  // coplanar / grazing
  const double winding = det > 0.0 ? 1.0 : -1.0;
  if (u == 0.0 && !owns_edge(cx - bx, cy - by, winding)) return std::nullopt;
  if (v == 0.0 && !owns_edge(ax - cx, ay - cy, winding)) return std::nullopt;
  if (w == 0.0 && !owns_edge(bx - ax, by - ay, winding)) return std::nullopt;

  const double az = rs.sz * A[rs.kz], bz = rs.sz * B[rs.kz], cz = rs.sz * C[rs.kz];
  const double t = (u * az + v * bz + w * cz) / det;
  if (!(t >= 0.0)) return std::nullopt;
  return t;
}

bool better(const RayHit& a, const std::optional<RayHit>& b) {
  return !b || a.t < b->t || (a.t == b->t && a.triangle < b->triangle);
}

// Conservative slab test; the interval is padded so no triangle is culled by rounding.
bool hits_box(const Aabb& box, const Ray& ray, const Vec3& inv, double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int k = 0; k < 3; ++k) {
    if (ray.direction[k] == 0.0) {
      if (ray.origin[k] < box.min[k] || ray.origin[k] > box.max[k]) return false;
      continue;
    }
    double near = (box.min[k] - ray.origin[k]) * inv[k];
    double far = (box.max[k] - ray.origin[k]) * inv[k];
    if (near > far) std::swap(near, far);
    far *= 1.0 + 1e-12;
    near -= std::abs(near) * 1e-12;
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

std::optional<double> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c) {
  return intersect_in_space(RaySpace(ray.direction), ray.origin, a, b, c);
}

std::optional<RayHit> intersect_brute_force(const TriangleMesh& mesh, const Ray& ray) {
  const RaySpace rs(ray.direction);
  std::optional<RayHit> best;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (auto d = intersect_in_space(rs, ray.origin, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2))) {
      RayHit hit{static_cast<std::uint32_t>(t), *d};
      if (better(hit, best)) best = hit;
    }
  }
  return best;
}

std::vector<RayHit> all_hits_brute_force(const TriangleMesh& mesh, const Ray& ray) {
  const RaySpace rs(ray.direction);
  std::vector<RayHit> hits;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (auto d = intersect_in_space(rs, ray.origin, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2))) {
      hits.push_back({static_cast<std::uint32_t>(t), *d});
    }
  }
  std::sort(hits.begin(), hits.end(),
            [](const RayHit& x, const RayHit& y) { return x.t < y.t || (x.t == y.t && x.triangle < y.triangle); });
  return hits;
}

bool occluded_brute_force(const TriangleMesh& mesh, const Ray& ray, std::uint32_t ignore) {
  const RaySpace rs(ray.direction);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (t == ignore) continue;
    if (intersect_in_space(rs, ray.origin, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2))) return true;
  }
  return false;
}

Bvh::Bvh(const TriangleMesh& mesh) : mesh_(&mesh) {
  const auto n = static_cast<std::uint32_t>(mesh.triangles.size());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0u);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t t = 0; t < n; ++t) {
    centroids[t] = (mesh.corner(t, 0) + mesh.corner(t, 1) + mesh.corner(t, 2)) / 3.0;
  }
  nodes_.reserve(2 * n / kLeafSize + 1);
  if (n > 0) build(0, n, centroids);
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids) {
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box, centroid_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    for (int k = 0; k < 3; ++k) box.extend(mesh_->corner(order_[i], k));
    centroid_box.extend(centroids[order_[i]]);
  }
  nodes_[index].box = box;

  const Vec3 spread = centroid_box.extent();
  if (end - begin <= kLeafSize || spread.maxCoeff() <= 0.0) {
    nodes_[index].first = begin;
    nodes_[index].count = end - begin;
    return index;
  }
  int axis = 0;
  spread.maxCoeff(&axis);
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t x, std::uint32_t y) {
                     return centroids[x][axis] < centroids[y][axis] ||
                            (centroids[x][axis] == centroids[y][axis] && x < y);
                   });
  build(begin, mid, centroids);
  const std::uint32_t right = build(mid, end, centroids);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  return index;
}

template <class Visit>
void Bvh::traverse(const Ray& ray, double& t_max, Visit&& visit) const {
  if (nodes_.empty()) return;
  const RaySpace rs(ray.direction);
  const Vec3 inv = ray.direction.cwiseInverse();
  std::array<std::uint32_t, 128> stack{};
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const std::uint32_t ni = stack[--top];
    const Node& node = nodes_[ni];
    if (!hits_box(node.box, ray, inv, t_max)) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t t = order_[i];
        if (auto d = intersect_in_space(rs, ray.origin, mesh_->corner(t, 0), mesh_->corner(t, 1), mesh_->corner(t, 2));
            d && *d <= t_max) {
          if (!visit(RayHit{t, *d})) return;
        }
      }
    } else {
      stack[top++] = ni + 1;
      stack[top++] = node.first;
    }
  }
}

std::optional<RayHit> Bvh::intersect(const Ray& ray, double t_max) const {
  std::optional<RayHit> best;
  traverse(ray, t_max, [&](const RayHit& hit) {
    if (better(hit, best)) {
      best = hit;
      t_max = hit.t;
    }
    return true;
  });
  return best;
}

bool Bvh::occluded(const Ray& ray, double t_max, std::uint32_t ignore) const {
  bool any = false;
  traverse(ray, t_max, [&](const RayHit& hit) {
    if (hit.triangle == ignore) return true;
    any = true;
    return false;
  });
  return any;
}

std::vector<RayHit> Bvh::all_hits(const Ray& ray) const {
  std::vector<RayHit> hits;
  double t_max = std::numeric_limits<double>::infinity();
  traverse(ray, t_max, [&](const RayHit& hit) {
    hits.push_back(hit);
    return true;
  });
  std::sort(hits.begin(), hits.end(),
            [](const RayHit& x, const RayHit& y) { return x.t < y.t || (x.t == y.t && x.triangle < y.triangle); });
  return hits;
}

}  // namespace cndhf

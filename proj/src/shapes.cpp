#include "cndhf/shapes.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <utility>

namespace cndhf::shapes {

TriangleMesh icosphere(double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                         {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                         {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      auto key = std::minmax(a, b);
      auto [it, inserted] = midpoint.try_emplace(key, static_cast<std::uint32_t>(v.size()));
      if (inserted) v.push_back((v[a] + v[b]).normalized());
      return it->second;
    };
    std::vector<Triangle> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const auto ab = mid(t[0], t[1]), bc = mid(t[1], t[2]), ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p *= radius;
  return TriangleMesh::from_indexed(std::move(v), std::move(f));
}

TriangleMesh box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int k = 0; k < 8; ++k) {
    v.emplace_back((k & 1) ? hi.x() : lo.x(), (k & 2) ? hi.y() : lo.y(), (k & 4) ? hi.z() : lo.z());
  }
  std::vector<Triangle> f = {{0, 2, 1}, {1, 2, 3},   // -z
                             {4, 5, 6}, {5, 7, 6},   // +z
                             {0, 1, 4}, {1, 5, 4},   // -y
                             {2, 6, 3}, {3, 6, 7},   // +y
                             {0, 4, 2}, {2, 4, 6},   // -x
                             {1, 3, 5}, {3, 7, 5}};  // +x
  return TriangleMesh::from_indexed(std::move(v), std::move(f));
}

TriangleMesh torus(double major_radius, double minor_radius, int major, int minor) {
  std::vector<Vec3> v;
  std::vector<Triangle> f;
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < major; ++i) {
    const double phi = two_pi * i / major;
    for (int j = 0; j < minor; ++j) {
      const double theta = two_pi * j / minor;
      const double ring = major_radius + minor_radius * std::cos(theta);
      v.emplace_back(ring * std::cos(phi), ring * std::sin(phi), minor_radius * std::sin(theta));
    }
  }
  auto id = [&](int i, int j) { return static_cast<std::uint32_t>((i % major) * minor + (j % minor)); };
  for (int i = 0; i < major; ++i) {
    for (int j = 0; j < minor; ++j) {
      f.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      f.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return TriangleMesh::from_indexed(std::move(v), std::move(f));
}

TriangleMesh voxel_solid(int nx, int ny, int nz, const Vec3& origin, double cell,
                         const std::function<bool(int, int, int)>& occupied) {
  auto inside = [&](int i, int j, int k) {
    return i >= 0 && j >= 0 && k >= 0 && i < nx && j < ny && k < nz && occupied(i, j, k);
  };
  std::map<std::array<int, 3>, std::uint32_t> lattice;
  std::vector<Vec3> v;
  auto vertex = [&](int i, int j, int k) {
    auto [it, inserted] = lattice.try_emplace({i, j, k}, static_cast<std::uint32_t>(v.size()));
    if (inserted) v.push_back(origin + cell * Vec3(i, j, k));
    return it->second;
  };
  std::vector<Triangle> f;
  auto quad = [&](std::array<int, 3> a, std::array<int, 3> b, std::array<int, 3> c, std::array<int, 3> d) {
    const auto ia = vertex(a[0], a[1], a[2]), ib = vertex(b[0], b[1], b[2]);
    const auto ic = vertex(c[0], c[1], c[2]), id = vertex(d[0], d[1], d[2]);
    f.push_back({ia, ib, ic});
    f.push_back({ia, ic, id});
  };
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      for (int k = 0; k < nz; ++k) {
        if (!inside(i, j, k)) continue;
        // Corner order is counter-clockwise seen from outside the cell.
        if (!inside(i - 1, j, k)) quad({i, j, k}, {i, j, k + 1}, {i, j + 1, k + 1}, {i, j + 1, k});
        if (!inside(i + 1, j, k)) quad({i + 1, j, k}, {i + 1, j + 1, k}, {i + 1, j + 1, k + 1}, {i + 1, j, k + 1});
        if (!inside(i, j - 1, k)) quad({i, j, k}, {i + 1, j, k}, {i + 1, j, k + 1}, {i, j, k + 1});
        if (!inside(i, j + 1, k)) quad({i, j + 1, k}, {i, j + 1, k + 1}, {i + 1, j + 1, k + 1}, {i + 1, j + 1, k});
        if (!inside(i, j, k - 1)) quad({i, j, k}, {i, j + 1, k}, {i + 1, j + 1, k}, {i + 1, j, k});
        if (!inside(i, j, k + 1)) quad({i, j, k + 1}, {i + 1, j, k + 1}, {i + 1, j + 1, k + 1}, {i, j + 1, k + 1});
      }
    }
  }
  return TriangleMesh::from_indexed(std::move(v), std::move(f));
}

TriangleMesh plus_solid() {
  // Plate A lies in the XY plane, plate B in the XZ plane; each passes through
  // the window cut into the other.
  return voxel_solid(20, 20, 20, Vec3(-1.0, -1.0, -1.0), 0.1, [](int i, int j, int k) {
    const bool a = (k == 9 || k == 10) && i >= 2 && i <= 11 && j >= 4 && j <= 15 &&
                   !(i >= 4 && i <= 9 && j >= 6 && j <= 13);
    const bool b = (j == 9 || j == 10) && i >= 8 && i <= 17 && k >= 4 && k <= 15 &&
                   !(i >= 10 && i <= 15 && k >= 6 && k <= 13);
    return a || b;
  });
}

}  // namespace cndhf::shapes

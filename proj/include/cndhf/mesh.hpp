#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "cndhf/geometry.hpp"

namespace cndhf {

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle soup with cached per-triangle areas.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<double> per_triangle_area;
  double total_area = 0.0;

  /// Validates indices and computes areas. Throws on an out-of-range index.
  static TriangleMesh from_indexed(std::vector<Vec3> vertices, std::vector<Triangle> triangles);

  [[nodiscard]] std::size_t triangle_count() const { return triangles.size(); }
  [[nodiscard]] const Vec3& corner(std::size_t t, int k) const { return vertices[triangles[t][k]]; }
  [[nodiscard]] Aabb bounds() const;
};

struct MeshDiagnostics {
  std::size_t degenerate_triangles = 0;
  std::size_t duplicate_triangles = 0;
};

struct LoadedMesh {
  TriangleMesh mesh;
  MeshDiagnostics diagnostics;
};

/// Maps original coordinates into the normalized frame: p' = scale * (p - center).
struct NormalizationTransform {
  double scale = 1.0;
  Vec3 center = Vec3::Zero();

  [[nodiscard]] Vec3 apply(const Vec3& p) const { return scale * (p - center); }
  [[nodiscard]] Vec3 invert(const Vec3& q) const { return q / scale + center; }
};

struct NormalizedMesh {
  TriangleMesh mesh;
  NormalizationTransform transform;
};

/// Longest bounding-box side after normalization (0.05 margin per side inside [-1,1]).
inline constexpr double kNormalizedExtent = 1.9;

MeshDiagnostics diagnose(const TriangleMesh& mesh);

/// Reads ASCII OBJ (v/f records only) or binary STL, chosen by extension.
LoadedMesh load_mesh(const std::filesystem::path& path);
LoadedMesh parse_obj(std::istream& in);
LoadedMesh parse_binary_stl(std::istream& in);

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
void write_obj(const TriangleMesh& mesh, std::ostream& out);
void save_binary_stl(const TriangleMesh& mesh, const std::filesystem::path& path);

NormalizedMesh normalize_to_unit_cube(const TriangleMesh& mesh);

/// Applies an arbitrary linear map to every vertex; areas are recomputed.
TriangleMesh transform_mesh(const TriangleMesh& mesh, const Mat3& linear);

struct SurfaceSample {
  std::uint32_t triangle_id = 0;
  Vec3 barycentric = Vec3::Constant(1.0 / 3.0);
  Vec3 position = Vec3::Zero();
};

/// Area-proportional samples: ceil(5 * N_t * a_t / A) per triangle (at least
/// one), the first being the centroid and the rest uniform in barycentric space.
/// Samples are grouped by triangle in ascending triangle order.
std::vector<SurfaceSample> sample_surface_points(const TriangleMesh& mesh, std::uint64_t seed);

/// Number of samples sample_surface_points assigns to each triangle.
std::vector<std::size_t> samples_per_triangle(const TriangleMesh& mesh);

}  // namespace cndhf

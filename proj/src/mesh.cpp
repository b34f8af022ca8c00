#include "cndhf/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "cndhf/binary_io.hpp"
#include "cndhf/error.hpp"

namespace cndhf {

namespace {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext;
}

// OBJ face token "12", "12/3", "12/3/4", "12//4"; negative values are relative.
long parse_face_index(const std::string& token, std::size_t vertex_count) {
  const std::string head = token.substr(0, token.find('/'));
  long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stol(head, &used);
    if (used != head.size()) throw Error("invalid index");
  } catch (const std::logic_error&) {
    throw Error("invalid index: \"" + token + "\"");
  }
  if (idx < 0) idx += static_cast<long>(vertex_count);
  else idx -= 1;
  if (idx < 0 || idx >= static_cast<long>(vertex_count)) {
    throw Error("invalid index: \"" + token + "\" with " + std::to_string(vertex_count) + " vertices");
  }
  return idx;
}

}  // namespace

TriangleMesh TriangleMesh::from_indexed(std::vector<Vec3> vertices, std::vector<Triangle> triangles) {
  TriangleMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  mesh.per_triangle_area.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    for (auto idx : mesh.triangles[t]) {
      if (idx >= mesh.vertices.size()) throw Error("invalid index in triangle " + std::to_string(t));
    }
    mesh.per_triangle_area[t] = triangle_area(mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2));
    mesh.total_area += mesh.per_triangle_area[t];
  }
  return mesh;
}

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const auto& v : vertices) box.extend(v);
  return box;
}

MeshDiagnostics diagnose(const TriangleMesh& mesh) {
  MeshDiagnostics diag;
  std::set<Triangle> seen;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (mesh.per_triangle_area[t] == 0.0) ++diag.degenerate_triangles;
    Triangle key = mesh.triangles[t];
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) ++diag.duplicate_triangles;
  }
  return diag;
}

LoadedMesh parse_obj(std::istream& in) {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string line;
  std::vector<long> face;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw Error("malformed vertex record: " + line);
      vertices.push_back(p);
    } else if (tag == "f") {
      face.clear();
      std::string token;
      while (ls >> token) face.push_back(parse_face_index(token, vertices.size()));
      if (face.size() < 3) throw Error("face with fewer than 3 vertices: " + line);
      for (std::size_t k = 1; k + 1 < face.size(); ++k) {
        triangles.push_back({static_cast<std::uint32_t>(face[0]), static_cast<std::uint32_t>(face[k]),
                             static_cast<std::uint32_t>(face[k + 1])});
      }
    }
  }
  if (triangles.empty()) throw Error("mesh has zero triangles");
  LoadedMesh out{TriangleMesh::from_indexed(std::move(vertices), std::move(triangles)), {}};
  out.diagnostics = diagnose(out.mesh);
  return out;
}

LoadedMesh parse_binary_stl(std::istream& in) {
  char header[80];
  in.read(header, sizeof(header));
  if (!in) throw Error("truncated STL header");
  const auto count = binio::read<std::uint32_t>(in);
  if (count == 0) throw Error("mesh has zero triangles");

  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  triangles.reserve(count);
  std::map<std::array<float, 3>, std::uint32_t> index_of;
  for (std::uint32_t t = 0; t < count; ++t) {
    for (int k = 0; k < 3; ++k) binio::read<float>(in);  // facet normal
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      std::array<float, 3> key{binio::read<float>(in), binio::read<float>(in), binio::read<float>(in)};
      auto [it, inserted] = index_of.try_emplace(key, static_cast<std::uint32_t>(vertices.size()));
      if (inserted) vertices.emplace_back(key[0], key[1], key[2]);
      tri[k] = it->second;
    }
    binio::read<std::uint16_t>(in);  // attribute byte count
    triangles.push_back(tri);
  }
  LoadedMesh out{TriangleMesh::from_indexed(std::move(vertices), std::move(triangles)), {}};
  out.diagnostics = diagnose(out.mesh);
  return out;
}

LoadedMesh load_mesh(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext != ".obj" && ext != ".stl") throw Error("unsupported mesh format: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read mesh file: " + path.string());
  return ext == ".obj" ? parse_obj(in) : parse_binary_stl(in);
}

void write_obj(const TriangleMesh& mesh, std::ostream& out) {
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_obj(mesh, out);
}

void save_binary_stl(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const char header[80] = "binary STL";
  out.write(header, sizeof(header));
  binio::write(out, static_cast<std::uint32_t>(mesh.triangles.size()));
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    Vec3 n = (mesh.corner(t, 1) - mesh.corner(t, 0)).cross(mesh.corner(t, 2) - mesh.corner(t, 0));
    if (n.norm() > 0) n.normalize();
    for (int k = 0; k < 3; ++k) binio::write(out, static_cast<float>(n[k]));
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) binio::write(out, static_cast<float>(mesh.corner(t, c)[k]));
    binio::write(out, std::uint16_t{0});
  }
}

NormalizedMesh normalize_to_unit_cube(const TriangleMesh& mesh) {
  const Aabb box = mesh.bounds();
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) throw Error("cannot normalize a zero-extent mesh");

  NormalizationTransform xf;
  xf.center = box.center();
  xf.scale = kNormalizedExtent / longest;

  std::vector<Vec3> vertices;
  vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) vertices.push_back(xf.apply(v));
  return {TriangleMesh::from_indexed(std::move(vertices), mesh.triangles), xf};
}

TriangleMesh transform_mesh(const TriangleMesh& mesh, const Mat3& linear) {
  std::vector<Vec3> vertices;
  vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) vertices.push_back(linear * v);
  return TriangleMesh::from_indexed(std::move(vertices), mesh.triangles);
}

std::vector<std::size_t> samples_per_triangle(const TriangleMesh& mesh) {
  const std::size_t n_tri = mesh.triangles.size();
  std::vector<std::size_t> counts(n_tri, 1);
  if (mesh.total_area <= 0.0) return counts;
  const double density = 5.0 * static_cast<double>(n_tri) / mesh.total_area;
  for (std::size_t t = 0; t < n_tri; ++t) {
    const double want = density * mesh.per_triangle_area[t];
    // Absorb rounding noise so that an exact integer target is not bumped up.
    const double guarded = std::ceil(want - 1e-9 * std::max(1.0, want));
    counts[t] = std::max<std::size_t>(1, static_cast<std::size_t>(guarded));
  }
  return counts;
}

std::vector<SurfaceSample> sample_surface_points(const TriangleMesh& mesh, std::uint64_t seed) {
  if (mesh.triangles.empty()) throw Error("cannot sample an empty mesh");
  const auto counts = samples_per_triangle(mesh);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<SurfaceSample> samples;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const Vec3 &a = mesh.corner(t, 0), &b = mesh.corner(t, 1), &c = mesh.corner(t, 2);
    for (std::size_t k = 0; k < counts[t]; ++k) {
      Vec3 bary = Vec3::Constant(1.0 / 3.0);
      if (k > 0) {
        const double r1 = std::sqrt(unit(rng));
        const double r2 = unit(rng);
        bary = Vec3(1.0 - r1, r1 * (1.0 - r2), r1 * r2);
      }
      samples.push_back({static_cast<std::uint32_t>(t), bary, bary[0] * a + bary[1] * b + bary[2] * c});
    }
  }
  return samples;
}

}  // namespace cndhf

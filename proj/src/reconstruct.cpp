#include "cndhf/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "cndhf/binary_io.hpp"
#include "cndhf/error.hpp"

namespace cndhf {

const std::array<std::array<std::uint8_t, 2>, 12> kCubeEdges = {{
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // along x
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // along y
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // along z
}};

std::size_t VoxelGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

VoxelGrid voxelize(const CnDhfModel& model, int resolution) {
  if (resolution < kMinVoxelResolution) throw Error("voxel resolution must be at least 8");
  VoxelGrid grid;
  grid.resolution = resolution;
  grid.spacing = 2.0 / resolution;
  grid.origin = Vec3::Constant(-1.0 + 0.5 * grid.spacing);
  const auto r = static_cast<std::size_t>(resolution);
  grid.bits.assign(r * r * r, 0);
  std::vector<Vec3> slice(r * r);
  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) slice[static_cast<std::size_t>(j) * r + static_cast<std::size_t>(i)] = grid.center(i, j, k);
    }
    const auto occ = occupancy(model, slice);
    std::copy(occ.begin(), occ.end(), grid.bits.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(k) * r * r));
  }
  return grid;
}

namespace {

Vec3 corner_position(int c) { return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)}; }

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e) {
    if ((kCubeEdges[e][0] == a && kCubeEdges[e][1] == b) || (kCubeEdges[e][0] == b && kCubeEdges[e][1] == a)) return e;
  }
  throw Error("corners are not adjacent");
}

// The 6 cube faces, each as 4 corners counter-clockwise seen from outside.
std::array<std::array<int, 4>, 6> cube_faces() {
  std::array<std::array<int, 4>, 6> faces{};
  int f = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Vec3 n = Vec3::Zero();
      n[axis] = side ? 1.0 : -1.0;
      const Vec3 u = Vec3::Unit((axis + 1) % 3);
      const Vec3 v = n.cross(u);
      std::vector<std::pair<double, int>> ring;
      for (int c = 0; c < 8; ++c) {
        if (((c >> axis) & 1) != side) continue;
        const Vec3 d = corner_position(c) - Vec3::Constant(0.5);
        ring.emplace_back(std::atan2(d.dot(v), d.dot(u)), c);
      }
      std::sort(ring.begin(), ring.end());
      for (int k = 0; k < 4; ++k) faces[f][k] = ring[k].second;
      ++f;
    }
  }
  return faces;
}

// Boundary loops of the inside region on the cube surface. On each face, a
// crossing where the walk enters the inside region is joined to the next
// crossing where it leaves, which keeps diagonal inside corners apart. Each
// crossing edge is the tail of one segment and the head of another, so the
// segments chain into closed loops.
bool on_common_face(int e1, int e2, const std::array<std::array<int, 4>, 6>& faces) {
  for (const auto& face : faces) {
    auto has = [&face](int e) {
      return std::find(face.begin(), face.end(), kCubeEdges[e][0]) != face.end() &&
             std::find(face.begin(), face.end(), kCubeEdges[e][1]) != face.end();
    };
    if (has(e1) && has(e2)) return true;
  }
  return false;
}

// Ear clipping with backtracking. A diagonal lying in a cube face would also be
// produced by the neighbouring cube, so such diagonals are refused.
bool triangulate_loop(std::vector<int> loop, const std::array<std::array<int, 4>, 6>& faces,
                      std::vector<std::array<int, 3>>& out) {
  const std::size_t n = loop.size();
  if (n == 3) {
    out.push_back({loop[0], loop[1], loop[2]});
    return true;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const int prev = loop[(k + n - 1) % n], cur = loop[k], next = loop[(k + 1) % n];
    if (on_common_face(prev, next, faces)) continue;
    std::vector<int> rest = loop;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(k));
    const std::size_t mark = out.size();
    out.push_back({prev, cur, next});
    if (triangulate_loop(std::move(rest), faces, out)) return true;
    out.resize(mark);
  }
  return false;
}

MarchingCubesTable build_table() {
  const auto faces = cube_faces();
  MarchingCubesTable table;
  for (int config = 0; config < 256; ++config) {
    auto inside = [config](int c) { return ((config >> c) & 1) != 0; };
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& face : faces) {
      std::vector<std::pair<int, bool>> crossings;  // (edge, entering)
      for (int k = 0; k < 4; ++k) {
        const int a = face[k], b = face[(k + 1) % 4];
        if (inside(a) != inside(b)) crossings.emplace_back(edge_between(a, b), inside(b));
      }
      for (std::size_t k = 0; k < crossings.size(); ++k) {
        if (!crossings[k].second) continue;
        for (std::size_t s = 1; s < crossings.size(); ++s) {
          const auto& other = crossings[(k + s) % crossings.size()];
          if (!other.second) {
            next[crossings[k].first] = other.first;
            break;
          }
        }
      }
    }
    std::array<bool, 12> used{};
    for (int start = 0; start < 12; ++start) {
      if (next[start] < 0 || used[start]) continue;
      std::vector<int> loop;
      for (int e = start; !used[e]; e = next[e]) {
        used[e] = true;
        loop.push_back(e);
      }
      std::vector<std::array<int, 3>> tris;
      if (!triangulate_loop(loop, faces, tris)) throw Error("no face-free triangulation of a cube loop");
      for (const auto& t : tris) {
        table[config].push_back(
            {static_cast<std::uint8_t>(t[0]), static_cast<std::uint8_t>(t[1]), static_cast<std::uint8_t>(t[2])});
      }
    }
  }
  // Orientation convention is fixed by a lone inside corner: its cap must face
  // away from the corner.
  const auto& tri = table[1].front();
  auto mid = [](int e) { return 0.5 * (corner_position(kCubeEdges[e][0]) + corner_position(kCubeEdges[e][1])); };
  const Vec3 normal = (mid(tri[1]) - mid(tri[0])).cross(mid(tri[2]) - mid(tri[0]));
  if (normal.dot(mid(tri[0]) - corner_position(0)) < 0.0) {
    for (auto& tris : table) {
      for (auto& t : tris) std::swap(t[1], t[2]);
    }
  }
  return table;
}

}  // namespace

const MarchingCubesTable& marching_cubes_table() {
  static const MarchingCubesTable table = build_table();
  return table;
}

TriangleMesh marching_cubes(const VoxelGrid& grid) {
  const int r = grid.resolution;
  if (r < 2 || grid.bits.size() != static_cast<std::size_t>(r) * r * r) throw Error("voxel grid must be at least 2^3");
  if (grid.occupied_count() == 0) throw Error("empty voxel grid");
  const auto& table = marching_cubes_table();
  const auto span = static_cast<std::uint64_t>(r + 2);
  std::unordered_map<std::uint64_t, std::uint32_t> vertex_of_edge;
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  for (int k = -1; k < r; ++k) {
    for (int j = -1; j < r; ++j) {
      for (int i = -1; i < r; ++i) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          if (grid.at_padded(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;
        for (const auto& tri : table[config]) {
          Triangle out{};
          for (int m = 0; m < 3; ++m) {
            const int e = tri[m];
            const int a = kCubeEdges[e][0];
            const int axis = e / 4;
            const int ci = i + (a & 1), cj = j + ((a >> 1) & 1), ck = k + ((a >> 2) & 1);
            const std::uint64_t key =
                ((static_cast<std::uint64_t>(ck + 1) * span + static_cast<std::uint64_t>(cj + 1)) * span +
                 static_cast<std::uint64_t>(ci + 1)) * 3 + static_cast<std::uint64_t>(axis);
            auto [it, inserted] = vertex_of_edge.try_emplace(key, static_cast<std::uint32_t>(vertices.size()));
            if (inserted) {
              Vec3 offset = Vec3::Zero();
              offset[axis] = 0.5;
              vertices.push_back(grid.center(ci, cj, ck) + grid.spacing * offset);
            }
            out[m] = it->second;
          }
          triangles.push_back(out);
        }
      }
    }
  }
  return TriangleMesh::from_indexed(std::move(vertices), std::move(triangles));
}

HeightFieldRaster field_raster(const ModelEntry& entry, int width, int height) {
  if (width <= 0 || height <= 0) throw Error("raster size must be positive");
  auto raster = HeightFieldRaster::empty(width, height, entry.axis);
  Eigen::Matrix2Xd uv(2, static_cast<Eigen::Index>(raster.pixel_count()));
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) uv.col(static_cast<Eigen::Index>(raster.index(i, j))) = raster.uv(i, j);
  }
  const Eigen::Matrix2Xd h = entry.field->evaluate(uv);
  for (std::size_t p = 0; p < raster.pixel_count(); ++p) {
    const auto col = static_cast<Eigen::Index>(p);
    if (h(0, col) <= h(1, col)) {
      raster.valid[p] = 1;
      raster.h_near[p] = static_cast<float>(std::clamp(h(0, col), -1.0, 1.0));
      raster.h_far[p] = static_cast<float>(std::clamp(h(1, col), -1.0, 1.0));
    }
  }
  return raster;
}

std::vector<TriangleMesh> export_model_hf_meshes(const CnDhfModel& model, int resolution) {
  std::vector<TriangleMesh> meshes;
  for (const auto& entry : model.entries) {
    const auto raster = field_raster(entry, resolution, resolution);
    meshes.push_back(export_hf_mesh(raster, HeightSurface::kNear));
    meshes.push_back(export_hf_mesh(raster, HeightSurface::kFar));
  }
  return meshes;
}

void save_voxels(const VoxelGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  binio::write_magic(out, "CNVX");
  binio::write(out, static_cast<std::uint32_t>(grid.resolution));
  out.write(reinterpret_cast<const char*>(grid.bits.data()), static_cast<std::streamsize>(grid.bits.size()));
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace cndhf

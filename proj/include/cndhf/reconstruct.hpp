#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cndhf/dhf_raster.hpp"
#include "cndhf/mesh.hpp"
#include "cndhf/occupancy.hpp"

namespace cndhf {

/// Binary occupancy at voxel centers of a regular grid over [-1,1]^3.
/// Voxel (i, j, k) is at origin + spacing * (i, j, k); storage is x-fastest.
struct VoxelGrid {
  int resolution = 0;
  Vec3 origin = Vec3::Zero();
  double spacing = 0.0;
  std::vector<std::uint8_t> bits;

  [[nodiscard]] std::size_t index(int i, int j, int k) const {
    const auto r = static_cast<std::size_t>(resolution);
    return (static_cast<std::size_t>(k) * r + static_cast<std::size_t>(j)) * r + static_cast<std::size_t>(i);
  }
  [[nodiscard]] bool at(int i, int j, int k) const { return bits[index(i, j, k)] != 0; }
  /// Out-of-range voxels read as empty.
  [[nodiscard]] bool at_padded(int i, int j, int k) const {
    if (i < 0 || j < 0 || k < 0 || i >= resolution || j >= resolution || k >= resolution) return false;
    return at(i, j, k);
  }
  [[nodiscard]] Vec3 center(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  [[nodiscard]] std::size_t occupied_count() const;
};

inline constexpr int kMinVoxelResolution = 8;

/// Voxel centers at -1 + (2i+1)/res per axis.
VoxelGrid voxelize(const CnDhfModel& model, int resolution);

/// Triangles for each of the 256 corner configurations, as triples of cube
/// edge ids. Corner c sits at (c & 1, (c >> 1) & 1, (c >> 2) & 1); edge e joins
/// the corners in kCubeEdges[e].
using MarchingCubesTable = std::array<std::vector<std::array<std::uint8_t, 3>>, 256>;
extern const std::array<std::array<std::uint8_t, 2>, 12> kCubeEdges;
const MarchingCubesTable& marching_cubes_table();

/// Surface between occupied and empty voxel centers, with vertices at edge
/// midpoints. The grid is padded with empty voxels, so the result is closed and
/// two-manifold along every edge, with outward winding.
TriangleMesh marching_cubes(const VoxelGrid& grid);

/// Evaluates every field on a width x height pixel grid; a pixel is valid iff
/// h_near <= h_far. Heights are clamped to [-1, 1].
HeightFieldRaster field_raster(const ModelEntry& entry, int width, int height);

/// Near and far surface meshes for every entry, in entry order (2N meshes).
std::vector<TriangleMesh> export_model_hf_meshes(const CnDhfModel& model, int resolution);

/// Raw dump: "CNVX", u32 resolution, then one byte per voxel.
void save_voxels(const VoxelGrid& grid, const std::filesystem::path& path);

}  // namespace cndhf

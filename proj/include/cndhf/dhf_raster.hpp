#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "cndhf/axis_select.hpp"
#include "cndhf/bvh.hpp"
#include "cndhf/mesh.hpp"

namespace cndhf {

/// Heights stored for pixels whose line misses the shape (h_far < h_near).
inline constexpr float kOutsideNear = 1.0f;
inline constexpr float kOutsideFar = -1.0f;

/// Paired lower/upper height grids over the uv square [-1,1]^2 of one axis.
/// Row-major: pixel (i, j) is column i (u) of row j (v).
struct HeightFieldRaster {
  int width = 0;
  int height = 0;
  DhfAxis axis;
  std::vector<float> h_near;
  std::vector<float> h_far;
  std::vector<std::uint8_t> valid;

  static HeightFieldRaster empty(int width, int height, const DhfAxis& axis);

  [[nodiscard]] std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(width) + static_cast<std::size_t>(i);
  }
  [[nodiscard]] std::size_t pixel_count() const { return h_near.size(); }
  [[nodiscard]] Vec2 uv(int i, int j) const {
    return {-1.0 + (2.0 * i + 1.0) / width, -1.0 + (2.0 * j + 1.0) / height};
  }
  [[nodiscard]] std::size_t valid_count() const;
  bool operator==(const HeightFieldRaster& other) const;
};

struct BakeStats {
  std::size_t odd_hit_pixels = 0;       // open or non-manifold crossings
  std::size_t multi_interval_pixels = 0;  // more than two crossings; outermost kept
};

/// Casts one line per pixel center along the axis and keeps the outermost
/// crossings as (h_near, h_far), clamped to [-1, 1].
HeightFieldRaster bake_raster(const Bvh& bvh, const DhfAxis& axis, int width, int height,
                              BakeStats* stats = nullptr);

struct LaplacianImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> support;
};

/// 5-point stencil (-4 center, +1 per neighbour) in pixel units. The support is
/// every pixel whose center and four neighbours are valid; values elsewhere are 0.
LaplacianImage numerical_laplacian(std::span<const double> image, std::span<const std::uint8_t> valid, int width,
                                   int height);

enum class HeightSurface { kNear, kFar };

/// Grid triangulation of one height surface over fully valid 2x2 pixel blocks,
/// mapped back to world space. Far surfaces face +axis, near surfaces -axis.
TriangleMesh export_hf_mesh(const HeightFieldRaster& raster, HeightSurface which);

/// Resamples to another grid by evaluating at the target pixel centers:
/// bilinear where the four surrounding source pixels are valid, else the
/// nearest source pixel (lower index on ties).
HeightFieldRaster resample_raster(const HeightFieldRaster& raster, int width, int height);

void write_raster(const HeightFieldRaster& raster, std::ostream& out);
HeightFieldRaster read_raster(std::istream& in);
void save_raster(const HeightFieldRaster& raster, const std::filesystem::path& path);
HeightFieldRaster load_raster(const std::filesystem::path& path);

}  // namespace cndhf

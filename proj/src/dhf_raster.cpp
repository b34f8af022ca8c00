#include "cndhf/dhf_raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "cndhf/binary_io.hpp"
#include "cndhf/error.hpp"

namespace cndhf {

namespace {

constexpr char kMagic[] = "DHFR";
constexpr std::uint32_t kVersion = 1;
// Lines start this far below the uv plane; the normalized shape fits in a
// sphere of radius sqrt(3) * 0.95 < 2.
constexpr double kLineStart = 2.0;

}  // namespace

HeightFieldRaster HeightFieldRaster::empty(int width, int height, const DhfAxis& axis) {
  if (width < 1 || height < 1) throw Error("raster resolution must be positive");
  HeightFieldRaster r;
  r.width = width;
  r.height = height;
  r.axis = axis;
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  r.h_near.assign(n, kOutsideNear);
  r.h_far.assign(n, kOutsideFar);
  r.valid.assign(n, 0);
  return r;
}

std::size_t HeightFieldRaster::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

bool HeightFieldRaster::operator==(const HeightFieldRaster& o) const {
  return width == o.width && height == o.height && axis.direction == o.axis.direction &&
         axis.rotation == o.axis.rotation && h_near == o.h_near && h_far == o.h_far && valid == o.valid;
}

HeightFieldRaster bake_raster(const Bvh& bvh, const DhfAxis& axis, int width, int height, BakeStats* stats) {
  if (width < 2 || height < 2) throw Error("raster resolution must be at least 2x2");
  auto raster = HeightFieldRaster::empty(width, height, axis);
  BakeStats local;
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      const Vec2 uv = raster.uv(i, j);
      const Ray line{axis.to_world(Vec3(uv.x(), uv.y(), -kLineStart)), axis.direction};
      const auto hits = bvh.all_hits(line);
      if (hits.empty()) continue;
      if (hits.size() % 2 == 1) ++local.odd_hit_pixels;
      if (hits.size() > 2) ++local.multi_interval_pixels;
      const double lo = std::clamp(hits.front().t - kLineStart, -1.0, 1.0);
      const double hi = std::clamp(hits.back().t - kLineStart, -1.0, 1.0);
      const std::size_t p = raster.index(i, j);
      raster.h_near[p] = static_cast<float>(lo);
      raster.h_far[p] = static_cast<float>(hi);
      raster.valid[p] = 1;
    }
  }
  if (stats) *stats = local;
  return raster;
}

LaplacianImage numerical_laplacian(std::span<const double> image, std::span<const std::uint8_t> valid, int width,
                                   int height) {
  if (width < 3 || height < 3) throw Error("laplacian needs at least a 3x3 grid");
  const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (image.size() != n || valid.size() != n) throw Error("laplacian input size mismatch");
  LaplacianImage out{width, height, std::vector<double>(n, 0.0), std::vector<std::uint8_t>(n, 0)};
  for (int j = 1; j + 1 < height; ++j) {
    for (int i = 1; i + 1 < width; ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * width + i;
      const std::size_t w = c - 1, e = c + 1, s = c - width, nn = c + width;
      if (!(valid[c] && valid[w] && valid[e] && valid[s] && valid[nn])) continue;
      out.support[c] = 1;
      out.values[c] = image[w] + image[e] + image[s] + image[nn] - 4.0 * image[c];
    }
  }
  return out;
}

TriangleMesh export_hf_mesh(const HeightFieldRaster& raster, HeightSurface which) {
  if (raster.valid_count() == 0) throw Error("raster has no valid pixels");
  const auto& h = which == HeightSurface::kNear ? raster.h_near : raster.h_far;
  std::vector<std::uint32_t> vertex_of(raster.pixel_count(), kNoTriangle);
  std::vector<Vec3> vertices;
  auto vertex = [&](int i, int j) {
    const std::size_t p = raster.index(i, j);
    if (vertex_of[p] == kNoTriangle) {
      vertex_of[p] = static_cast<std::uint32_t>(vertices.size());
      const Vec2 uv = raster.uv(i, j);
      vertices.push_back(raster.axis.to_world(Vec3(uv.x(), uv.y(), h[p])));
    }
    return vertex_of[p];
  };
  std::vector<Triangle> triangles;
  for (int j = 0; j + 1 < raster.height; ++j) {
    for (int i = 0; i + 1 < raster.width; ++i) {
      if (!(raster.valid[raster.index(i, j)] && raster.valid[raster.index(i + 1, j)] &&
            raster.valid[raster.index(i, j + 1)] && raster.valid[raster.index(i + 1, j + 1)])) {
        continue;
      }
      const auto a = vertex(i, j), b = vertex(i + 1, j), c = vertex(i + 1, j + 1), d = vertex(i, j + 1);
      if (which == HeightSurface::kFar) {
        triangles.push_back({a, b, c});
        triangles.push_back({a, c, d});
      } else {
        triangles.push_back({a, c, b});
        triangles.push_back({a, d, c});
      }
    }
  }
  if (triangles.empty()) throw Error("raster has no fully valid 2x2 block");
  return TriangleMesh::from_indexed(std::move(vertices), std::move(triangles));
}

HeightFieldRaster resample_raster(const HeightFieldRaster& src, int width, int height) {
  if (width == src.width && height == src.height) return src;
  auto out = HeightFieldRaster::empty(width, height, src.axis);
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      const Vec2 uv = out.uv(i, j);
      // Continuous source pixel coordinates; integer values are pixel centers.
      const double x = (uv.x() + 1.0) * 0.5 * src.width - 0.5;
      const double y = (uv.y() + 1.0) * 0.5 * src.height - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, src.width - 1);
      const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, src.height - 1);
      const int x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
      const double fx = std::clamp(x - x0, 0.0, 1.0), fy = std::clamp(y - y0, 0.0, 1.0);
      const std::size_t p00 = src.index(x0, y0), p10 = src.index(x1, y0);
      const std::size_t p01 = src.index(x0, y1), p11 = src.index(x1, y1);
      const std::size_t q = out.index(i, j);
      if (src.valid[p00] && src.valid[p10] && src.valid[p01] && src.valid[p11]) {
        auto lerp = [&](const std::vector<float>& g) {
          const double top = (1 - fx) * g[p00] + fx * g[p10];
          const double bottom = (1 - fx) * g[p01] + fx * g[p11];
          return static_cast<float>((1 - fy) * top + fy * bottom);
        };
        out.h_near[q] = lerp(src.h_near);
        out.h_far[q] = lerp(src.h_far);
        out.valid[q] = 1;
      } else {
        const int nx = fx > 0.5 ? x1 : x0, ny = fy > 0.5 ? y1 : y0;
        const std::size_t p = src.index(nx, ny);
        out.h_near[q] = src.h_near[p];
        out.h_far[q] = src.h_far[p];
        out.valid[q] = src.valid[p];
      }
    }
  }
  return out;
}

void write_raster(const HeightFieldRaster& r, std::ostream& out) {
  binio::write_magic(out, kMagic);
  binio::write(out, kVersion);
  binio::write(out, static_cast<std::uint32_t>(r.width));
  binio::write(out, static_cast<std::uint32_t>(r.height));
  for (int k = 0; k < 3; ++k) binio::write(out, r.axis.direction[k]);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) binio::write(out, r.axis.rotation(row, col));
  for (std::size_t p = 0; p < r.pixel_count(); ++p) {
    binio::write(out, r.h_near[p]);
    binio::write(out, r.h_far[p]);
    binio::write(out, r.valid[p]);
  }
  if (!out) throw Error("failed writing raster");
}

HeightFieldRaster read_raster(std::istream& in) {
  binio::expect_magic(in, kMagic);
  if (const auto version = binio::read<std::uint32_t>(in); version != kVersion) {
    throw Error("unsupported raster version " + std::to_string(version));
  }
  const auto w = binio::read<std::uint32_t>(in);
  const auto h = binio::read<std::uint32_t>(in);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw Error("implausible raster size");
  DhfAxis axis;
  for (int k = 0; k < 3; ++k) axis.direction[k] = binio::read<double>(in);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) axis.rotation(row, col) = binio::read<double>(in);
  auto r = HeightFieldRaster::empty(static_cast<int>(w), static_cast<int>(h), axis);
  for (std::size_t p = 0; p < r.pixel_count(); ++p) {
    r.h_near[p] = binio::read<float>(in);
    r.h_far[p] = binio::read<float>(in);
    r.valid[p] = binio::read<std::uint8_t>(in);
  }
  return r;
}

void save_raster(const HeightFieldRaster& raster, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_raster(raster, out);
}

HeightFieldRaster load_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read raster " + path.string());
  return read_raster(in);
}

}  // namespace cndhf

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cndhf/dhf_raster.hpp"
#include "cndhf/error.hpp"
#include "cndhf/shapes.hpp"

using namespace cndhf;

namespace {

const TriangleMesh& sphere095() {
  static const TriangleMesh m = normalize_to_unit_cube(shapes::icosphere(1.0, 5)).mesh;
  return m;
}

// Ray parity along a slightly oblique direction.
bool inside(const Bvh& bvh, const Vec3& p) {
  return bvh.all_hits(Ray{p, Vec3(0.013, 0.021, 1.0).normalized()}).size() % 2 == 1;
}

HeightFieldRaster random_raster(std::mt19937_64& rng, int w, int h) {
  std::normal_distribution<double> n;
  auto r = HeightFieldRaster::empty(w, h, DhfAxis::from_direction(Vec3(n(rng), n(rng), n(rng)).normalized()));
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (std::size_t p = 0; p < r.pixel_count(); ++p) {
    r.valid[p] = static_cast<std::uint8_t>(rng() % 2);
    r.h_near[p] = u(rng);
    r.h_far[p] = u(rng);
  }
  return r;
}

}  // namespace

TEST_CASE("pixel centers") {
  const auto r = HeightFieldRaster::empty(4, 2, DhfAxis{});
  CHECK(r.uv(0, 0).x() == doctest::Approx(-0.75));
  CHECK(r.uv(3, 1).y() == doctest::Approx(0.5));
  CHECK(r.index(3, 1) == 7);
  CHECK(r.h_near[0] == kOutsideNear);
  CHECK(r.h_far[0] == kOutsideFar);
}

TEST_CASE("sphere bake matches the analytic heights") {
  const Bvh bvh(sphere095());
  const auto r = bake_raster(bvh, DhfAxis{}, 128, 128);
  const double pixel = 2.0 / 128;
  // center pixel, within tessellation tolerance
  const std::size_t c = r.index(64, 64);
  REQUIRE(r.valid[c]);
  CHECK(r.h_near[c] == doctest::Approx(-0.95).epsilon(2e-3));
  CHECK(r.h_far[c] == doctest::Approx(0.95).epsilon(2e-3));
  // corner pixel outside the silhouette
  CHECK_FALSE(r.valid[r.index(0, 0)]);
  CHECK(r.h_near[r.index(0, 0)] == kOutsideNear);
  CHECK(r.h_far[r.index(0, 0)] == kOutsideFar);
  for (int j = 0; j < 128; ++j) {
    for (int i = 0; i < 128; ++i) {
      const auto p = r.index(i, j);
      if (!r.valid[p]) continue;
      const Vec2 uv = r.uv(i, j);
      const double h = std::sqrt(std::max(0.0, 0.95 * 0.95 - uv.squaredNorm()));
      CHECK(std::abs(r.h_far[p] - h) < 2 * pixel);
      CHECK(std::abs(r.h_near[p] + h) < 2 * pixel);
      CHECK(r.h_near[p] <= r.h_far[p]);
    }
  }
}

TEST_CASE("box bake is exact and its far export is the top face") {
  const auto box = shapes::box(Vec3::Constant(-0.5), Vec3::Constant(0.5));
  const Bvh bvh(box);
  const auto r = bake_raster(bvh, DhfAxis{}, 64, 64);
  std::size_t interior = 0;
  for (int j = 0; j < 64; ++j) {
    for (int i = 0; i < 64; ++i) {
      const Vec2 uv = r.uv(i, j);
      const auto p = r.index(i, j);
      if (std::abs(uv.x()) < 0.5 && std::abs(uv.y()) < 0.5) {
        REQUIRE(r.valid[p]);
        CHECK(r.h_near[p] == -0.5f);
        CHECK(r.h_far[p] == 0.5f);
        ++interior;
      } else {
        CHECK_FALSE(r.valid[p]);
      }
    }
  }
  CHECK(interior == 32 * 32);
  const auto top = export_hf_mesh(r, HeightSurface::kFar);
  for (const auto& v : top.vertices) CHECK(std::abs(v.z() - 0.5) < 1e-9);
  for (std::size_t t = 0; t < top.triangle_count(); ++t) {
    const Vec3 n = (top.corner(t, 1) - top.corner(t, 0)).cross(top.corner(t, 2) - top.corner(t, 0));
    CHECK(n.z() > 0.0);
  }
  const auto bottom = export_hf_mesh(r, HeightSurface::kNear);
  for (std::size_t t = 0; t < bottom.triangle_count(); ++t) {
    const Vec3 n = (bottom.corner(t, 1) - bottom.corner(t, 0)).cross(bottom.corner(t, 2) - bottom.corner(t, 0));
    CHECK(n.z() < 0.0);
  }
}

TEST_CASE("sphere near export is a hemisphere within two pixels") {
  const Bvh bvh(sphere095());
  const auto r = bake_raster(bvh, DhfAxis{}, 96, 96);
  const auto near = export_hf_mesh(r, HeightSurface::kNear);
  CHECK(near.triangle_count() > 0);
  for (const auto& v : near.vertices) {
    CHECK(v.z() <= 1e-9);
    CHECK(std::abs(v.norm() - 0.95) < 2 * 2.0 / 96);
  }
}

TEST_CASE("fully invalid raster cannot be exported") {
  const auto r = HeightFieldRaster::empty(8, 8, DhfAxis{});
  CHECK_THROWS_AS(export_hf_mesh(r, HeightSurface::kFar), Error);
}

TEST_CASE("rotation consistency: baking along an axis equals baking the rotated mesh along +Z") {
  const auto torus = normalize_to_unit_cube(shapes::torus(1.0, 0.4, 32, 16)).mesh;
  const auto axis = DhfAxis::from_direction(Vec3(0.3, -0.4, 0.8).normalized());
  const Bvh a(torus);
  const auto rotated = transform_mesh(torus, axis.rotation);
  const Bvh b(rotated);
  const auto ra = bake_raster(a, axis, 48, 48);
  const auto rb = bake_raster(b, DhfAxis{}, 48, 48);
  std::size_t mismatched_masks = 0;
  for (std::size_t p = 0; p < ra.pixel_count(); ++p) {
    if (ra.valid[p] != rb.valid[p]) {
      ++mismatched_masks;  // only possible for lines grazing an edge
      continue;
    }
    if (!ra.valid[p]) continue;
    CHECK(std::abs(ra.h_near[p] - rb.h_near[p]) <= 1e-7);
    CHECK(std::abs(ra.h_far[p] - rb.h_far[p]) <= 1e-7);
  }
  CHECK(mismatched_masks == 0);
}

TEST_CASE("mask/occupancy consistency: valid-pixel midpoints lie inside the mesh") {
  const auto torus = normalize_to_unit_cube(shapes::torus(1.0, 0.4, 32, 16)).mesh;
  const Bvh bvh(torus);
  for (const Vec3& d : std::vector<Vec3>{Vec3::UnitZ(), Vec3(1, 0.5, 0.2).normalized()}) {
    const auto axis = DhfAxis::from_direction(d);
    BakeStats stats;
    const auto r = bake_raster(bvh, axis, 48, 48, &stats);
    CHECK(stats.odd_hit_pixels == 0);
    for (int j = 0; j < 48; ++j) {
      for (int i = 0; i < 48; ++i) {
        const auto p = r.index(i, j);
        if (!r.valid[p]) continue;
        const Vec2 uv = r.uv(i, j);
        // Along +Z every line meets the torus in one interval; oblique lines
        // may cross the hole, so only the z axis midpoint is guaranteed inside.
        if (d == Vec3::UnitZ()) {
          CHECK(inside(bvh, axis.to_world(Vec3(uv.x(), uv.y(), 0.5 * (r.h_near[p] + r.h_far[p])))));
        }
      }
    }
    if (d != Vec3::UnitZ()) CHECK(stats.multi_interval_pixels > 0);
  }
}

TEST_CASE("Laplacian examples") {
  const int w = 9, h = 7;
  std::vector<std::uint8_t> valid(w * h, 1);
  std::vector<double> constant(w * h, 3.25), ramp(w * h), quad(w * h);
  const double delta = 2.0 / w;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const double u = -1.0 + (2.0 * i + 1.0) / w, v = -1.0 + (2.0 * j + 1.0) / h;
      ramp[j * w + i] = 0.7 * u - 1.3 * v;
      quad[j * w + i] = u * u;
    }
  }
  const auto lc = numerical_laplacian(constant, valid, w, h);
  const auto lr = numerical_laplacian(ramp, valid, w, h);
  const auto lq = numerical_laplacian(quad, valid, w, h);
  std::size_t support = 0;
  for (std::size_t p = 0; p < valid.size(); ++p) {
    if (!lc.support[p]) {
      CHECK(lc.values[p] == 0.0);
      continue;
    }
    ++support;
    CHECK(lc.values[p] == 0.0);
    CHECK(std::abs(lr.values[p]) < 1e-12);
    CHECK(lq.values[p] == doctest::Approx(2 * delta * delta).epsilon(1e-9));
  }
  CHECK(support == static_cast<std::size_t>((w - 2) * (h - 2)));

  // an invalid pixel removes itself and its four neighbours from the support
  valid[3 * w + 4] = 0;
  const auto holed = numerical_laplacian(constant, valid, w, h);
  CHECK_FALSE(holed.support[3 * w + 4]);
  CHECK_FALSE(holed.support[3 * w + 5]);
  CHECK_FALSE(holed.support[2 * w + 4]);
  CHECK(holed.support[2 * w + 5]);
}

TEST_CASE("Laplacian is self-adjoint on full support") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  const int w = 16, h = 12;
  std::vector<double> x(w * h), y(w * h);
  for (auto& v : x) v = n(rng);
  for (auto& v : y) v = n(rng);
  // Zero border so the stencil acts like a symmetric operator with Dirichlet edges.
  auto zero_border = [&](std::vector<double>& img) {
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        if (i < 2 || j < 2 || i >= w - 2 || j >= h - 2) img[j * w + i] = 0.0;
      }
    }
  };
  zero_border(x);
  zero_border(y);
  const std::vector<std::uint8_t> valid(w * h, 1);
  const auto lx = numerical_laplacian(x, valid, w, h), ly = numerical_laplacian(y, valid, w, h);
  double a = 0.0, b = 0.0;
  for (int p = 0; p < w * h; ++p) {
    a += lx.values[p] * y[p];
    b += x[p] * ly.values[p];
  }
  CHECK(std::abs(a - b) < 1e-9);
}

TEST_CASE("resampling: identity size is a no-op, constant regions stay constant") {
  const auto box = shapes::box(Vec3::Constant(-0.5), Vec3::Constant(0.5));
  const Bvh bvh(box);
  const auto r = bake_raster(bvh, DhfAxis{}, 64, 64);
  CHECK(resample_raster(r, 64, 64) == r);
  const auto small = resample_raster(r, 16, 16);
  for (int j = 0; j < 16; ++j) {
    for (int i = 0; i < 16; ++i) {
      const auto p = small.index(i, j);
      if (small.valid[p]) {
        CHECK(small.h_far[p] == 0.5f);
        CHECK(small.h_near[p] == -0.5f);
      }
    }
  }
  CHECK(small.valid[small.index(8, 8)]);
  CHECK_FALSE(small.valid[small.index(0, 0)]);
}

TEST_CASE(".dhfr round trip is bit exact") {
  std::mt19937_64 rng(77);
  for (int k = 0; k < 10; ++k) {
    const auto r = random_raster(rng, 1 + static_cast<int>(rng() % 40), 1 + static_cast<int>(rng() % 40));
    std::stringstream s;
    write_raster(r, s);
    const std::string bytes = s.str();
    CHECK(bytes.substr(0, 4) == "DHFR");
    CHECK(bytes.size() == 4 + 4 + 4 + 4 + 24 + 72 + r.pixel_count() * 9);
    const auto back = read_raster(s);
    CHECK(back == r);
    std::stringstream again;
    write_raster(back, again);
    CHECK(again.str() == bytes);
  }
}

TEST_CASE(".dhfr rejects bad magic and truncation") {
  std::stringstream bad("XXXXabcd");
  CHECK_THROWS_AS(read_raster(bad), Error);
  std::mt19937_64 rng(1);
  std::stringstream s;
  write_raster(random_raster(rng, 4, 4), s);
  std::stringstream cut(s.str().substr(0, s.str().size() - 3));
  CHECK_THROWS_AS(read_raster(cut), Error);
}

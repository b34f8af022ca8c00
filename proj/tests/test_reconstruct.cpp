#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "cndhf/error.hpp"
#include "cndhf/reconstruct.hpp"

using namespace cndhf;

namespace {

const DhfAxis kZ = DhfAxis::from_direction(Vec3::UnitZ());

CnDhfModel model_of(FieldPtr field) {
  CnDhfModel m;
  m.entries.push_back({kZ, std::move(field)});
  return m;
}

// Every directed edge must be matched by its reverse exactly once.
bool closed_and_oriented(const TriangleMesh& m) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : m.triangles) {
    for (int k = 0; k < 3; ++k) ++directed[{t[k], t[(k + 1) % 3]}];
  }
  for (const auto& [e, n] : directed) {
    if (n != 1) return false;
    const auto rev = directed.find({e.second, e.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

double signed_volume(const TriangleMesh& m) {
  double v = 0.0;
  for (std::size_t t = 0; t < m.triangle_count(); ++t) v += m.corner(t, 0).dot(m.corner(t, 1).cross(m.corner(t, 2)));
  return v / 6.0;
}

std::size_t edge_count(const TriangleMesh& m) {
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (const auto& t : m.triangles) {
    for (int k = 0; k < 3; ++k) edges.insert(std::minmax(t[k], t[(k + 1) % 3]));
  }
  return edges.size();
}

VoxelGrid empty_grid(int res) {
  VoxelGrid g;
  g.resolution = res;
  g.spacing = 2.0 / res;
  g.origin = Vec3::Constant(-1.0 + 0.5 * g.spacing);
  g.bits.assign(static_cast<std::size_t>(res) * res * res, 0);
  return g;
}

}  // namespace

TEST_CASE("marching-cubes table: every case closes up consistently") {
  const auto& table = marching_cubes_table();
  CHECK(table[0].empty());
  CHECK(table[255].empty());
  CHECK(table[1].size() == 1);
  for (int config = 1; config < 255; ++config) {
    CHECK_FALSE(table[config].empty());
    // inside a single cube, every boundary edge of the patch lies on a cube face;
    // directed cube-edge pairs appear at most once
    std::set<std::pair<int, int>> seen;
    for (const auto& tri : table[config]) {
      for (int k = 0; k < 3; ++k) {
        const int a = tri[k], b = tri[(k + 1) % 3];
        CHECK(a != b);
        CHECK(seen.insert({a, b}).second);
        const auto& e = kCubeEdges[a];
        // only edges with a sign change are used
        CHECK(((config >> e[0]) & 1) != ((config >> e[1]) & 1));
      }
    }
  }
}

TEST_CASE("random grids produce closed, outward meshes") {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 20; ++round) {
    auto g = empty_grid(8);
    std::bernoulli_distribution coin(0.1 + 0.04 * round);
    for (auto& b : g.bits) b = coin(rng) ? 1 : 0;
    if (g.occupied_count() == 0) continue;
    const auto m = marching_cubes(g);
    CHECK(closed_and_oriented(m));
    CHECK(signed_volume(m) > 0.0);
  }
}

TEST_CASE("single voxel gives a closed genus-0 surface") {
  auto g = empty_grid(8);
  g.bits[g.index(3, 4, 5)] = 1;
  const auto m = marching_cubes(g);
  CHECK(closed_and_oriented(m));
  const auto v = static_cast<long>(m.vertices.size()), e = static_cast<long>(edge_count(m)),
             f = static_cast<long>(m.triangle_count());
  CHECK(v - e + f == 2);
  CHECK(signed_volume(m) > 0.0);
  for (const auto& p : m.vertices) CHECK((p - g.center(3, 4, 5)).cwiseAbs().maxCoeff() == doctest::Approx(0.5 * g.spacing));
}

TEST_CASE("all-occupied grid hugs the domain boundary") {
  const auto g = voxelize(model_of(slab_field(1.0)), 8);
  CHECK(g.occupied_count() == g.bits.size());
  const auto m = marching_cubes(g);
  CHECK(closed_and_oriented(m));
  for (const auto& p : m.vertices) CHECK(p.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("voxelize examples") {
  const auto sphere = voxelize(model_of(sphere_field(0.95)), 64);
  const double expected = 4.0 / 3.0 * std::numbers::pi * std::pow(0.95, 3) / 8.0;
  const double got = static_cast<double>(sphere.occupied_count()) / static_cast<double>(sphere.bits.size());
  CHECK(std::abs(got - expected) <= 0.02 * expected);

  CHECK(voxelize(model_of(constant_field(1, -1)), 16).occupied_count() == 0);
  CHECK_THROWS_AS(voxelize(model_of(slab_field(1)), 7), Error);
  CHECK_THROWS_AS(marching_cubes(empty_grid(8)), Error);
}

TEST_CASE("sphere surface stays within two voxel diagonals of the analytic sphere") {
  const auto g = voxelize(model_of(sphere_field(0.95)), 64);
  const auto m = marching_cubes(g);
  CHECK(closed_and_oriented(m));
  const double diag = std::sqrt(3.0) * g.spacing;
  double worst = 0.0;
  for (const auto& p : m.vertices) worst = std::max(worst, std::abs(p.norm() - 0.95));
  CHECK(worst < 2 * diag);
  // the other direction: analytic points are near some vertex
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  double back = 0.0;
  for (int k = 0; k < 300; ++k) {
    const Vec3 s = 0.95 * Vec3(n(rng), n(rng), n(rng)).normalized();
    double best = 1e9;
    for (const auto& p : m.vertices) best = std::min(best, (p - s).norm());
    back = std::max(back, best);
  }
  CHECK(back < 2 * diag);
}

TEST_CASE("extraction consistency: vertices straddle the occupancy boundary") {
  const auto model = model_of(sphere_field(0.95));
  const auto g = voxelize(model, 48);
  const auto m = marching_cubes(g);
  std::vector<Vec3> normals(m.vertices.size(), Vec3::Zero());
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const Vec3 n = (m.corner(t, 1) - m.corner(t, 0)).cross(m.corner(t, 2) - m.corner(t, 0));
    for (int k = 0; k < 3; ++k) normals[m.triangles[t][k]] += n;
  }
  std::vector<Vec3> probes;
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const Vec3 n = normals[i].normalized();
    probes.push_back(m.vertices[i] - 0.6 * g.spacing * n);
    probes.push_back(m.vertices[i] + 0.6 * g.spacing * n);
  }
  const auto occ = occupancy(model, probes);
  std::size_t good = 0;
  for (std::size_t i = 0; i < m.vertices.size(); ++i) good += (occ[2 * i] == 1 && occ[2 * i + 1] == 0);
  CHECK(static_cast<double>(good) >= 0.95 * static_cast<double>(m.vertices.size()));
}

TEST_CASE("extraction is deterministic") {
  const auto model = model_of(sphere_field(0.7));
  std::stringstream a, b;
  write_obj(marching_cubes(voxelize(model, 24)), a);
  write_obj(marching_cubes(voxelize(model, 24)), b);
  CHECK(a.str() == b.str());
}

TEST_CASE("height-field export per axis") {
  CnDhfModel two;
  two.entries.push_back({kZ, sphere_field(0.9)});
  two.entries.push_back({DhfAxis::from_direction(Vec3::UnitX()), sphere_field(0.9)});
  const auto meshes = export_model_hf_meshes(two, 32);
  CHECK(meshes.size() == 4);

  const auto sphere = export_model_hf_meshes(model_of(sphere_field(0.9)), 48);
  REQUIRE(sphere.size() == 2);
  for (const auto& p : sphere[0].vertices) CHECK(p.z() <= 1e-9);
  for (const auto& p : sphere[1].vertices) CHECK(p.z() >= -1e-9);
  for (const auto& p : sphere[1].vertices) CHECK(std::abs(p.norm() - 0.9) < 1e-6);

  CHECK_THROWS_AS(export_model_hf_meshes(model_of(constant_field(0.2, 0.1)), 16), Error);
}

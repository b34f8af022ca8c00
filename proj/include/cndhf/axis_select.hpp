#pragma once

#include <cstdint>
#include <vector>

#include "cndhf/bvh.hpp"
#include "cndhf/mesh.hpp"

namespace cndhf {

/// A height-field axis and the minimal rotation taking it to +Z.
struct DhfAxis {
  Vec3 direction = Vec3::UnitZ();
  Mat3 rotation = Mat3::Identity();

  static DhfAxis from_direction(const Vec3& direction);
  /// Point in the axis frame: (u, v, height).
  [[nodiscard]] Vec3 to_local(const Vec3& p) const { return rotation * p; }
  [[nodiscard]] Vec3 to_world(const Vec3& q) const { return rotation.transpose() * q; }
};

/// Rodrigues rotation about direction x +Z. For direction ~ -Z the rotation is
/// a half turn about +X.
Mat3 minimal_rotation(const Vec3& direction);

/// Spherical Fibonacci directions followed by +X, +Y, +Z, with near-duplicates
/// (angle < 1e-6 rad) removed.
std::vector<Vec3> candidate_directions(int n_fibonacci = 50);

/// Offset along the cast direction applied to visibility ray origins.
inline constexpr double kVisibilityEpsilon = 1e-4;
/// Offset along the sample triangle's winding normal. Keeps rays that lie in
/// the triangle's plane on the outer side, so they cannot clip the edges of
/// perpendicular faces.
inline constexpr double kVisibilityNormalOffset = 1e-6;

/// Per-triangle bit: 1 iff every sample of the triangle escapes along +axis or
/// -axis. The sample's own triangle never occludes it.
std::vector<std::uint8_t> triangle_visibility(const Bvh& bvh, const std::vector<SurfaceSample>& samples,
                                              const Vec3& axis);

/// Same predicate evaluated against every triangle without acceleration.
std::vector<std::uint8_t> triangle_visibility_brute_force(const TriangleMesh& mesh,
                                                          const std::vector<SurfaceSample>& samples,
                                                          const Vec3& axis);

enum class EffectiveAreaMode {
  kAsPrinted,  // a_t * max(count_t / mean_count, 1)
  kInverse,    // a_t * max(mean_count / count_t, 1); never-visible triangles keep a_t
};

/// visibility[i][t] is the bit of candidate i for triangle t.
using VisibilityTable = std::vector<std::vector<std::uint8_t>>;

VisibilityTable visibility_table(const Bvh& bvh, const std::vector<SurfaceSample>& samples,
                                 const std::vector<Vec3>& candidates);

/// Throws "fully occluded input" when no triangle is visible from any candidate.
std::vector<double> effective_areas(const VisibilityTable& visibility, const std::vector<double>& areas,
                                    EffectiveAreaMode mode = EffectiveAreaMode::kAsPrinted);

struct AxisSelection {
  std::vector<DhfAxis> axes;
  std::vector<std::size_t> candidate_indices;
  /// Newly covered share of the visible effective area, per selected axis.
  std::vector<double> per_axis_marginal_coverage;
  std::vector<double> cumulative_coverage;
  /// Greedy curve continued past the stopping rule until no candidate adds area.
  std::vector<double> coverage_curve;
  /// Effective area visible from at least one candidate over all effective area.
  double visible_fraction = 0.0;
  /// Covered effective area over all effective area (visible or not).
  double covered_fraction_of_total = 0.0;
};

struct SelectionOptions {
  int n_fibonacci = 50;
  double coverage_target = 0.999;
  EffectiveAreaMode effective_area = EffectiveAreaMode::kAsPrinted;
  std::uint64_t seed = 0;
};

/// Greedy choice over precomputed bits. Ties resolve to the lowest candidate index.
AxisSelection greedy_select(const VisibilityTable& visibility, const std::vector<double>& effective,
                            const std::vector<Vec3>& candidates, double coverage_target);

/// Full pipeline: sample, cast, weight, select.
AxisSelection greedy_select(const TriangleMesh& mesh, const SelectionOptions& options = {});

}  // namespace cndhf

#include "cndhf/axis_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "cndhf/error.hpp"

namespace cndhf {

Mat3 minimal_rotation(const Vec3& direction) {
  const Vec3 d = direction.normalized();
  const Vec3 z = Vec3::UnitZ();
  const Vec3 k = d.cross(z);  // |k| = sin(angle)
  const double c = d.dot(z);
  if (k.norm() < 1e-12) {
    if (c > 0.0) return Mat3::Identity();
    return Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitX()).toRotationMatrix();
  }
  Mat3 skew;
  skew << 0.0, -k.z(), k.y(),  //
      k.z(), 0.0, -k.x(),      //
      -k.y(), k.x(), 0.0;
  return Mat3::Identity() + skew + skew * skew / (1.0 + c);
}

DhfAxis DhfAxis::from_direction(const Vec3& direction) {
  DhfAxis axis;
  axis.direction = direction.normalized();
  axis.rotation = minimal_rotation(axis.direction);
  return axis;
}

std::vector<Vec3> candidate_directions(int n_fibonacci) {
  if (n_fibonacci < 1) throw Error("n_fibonacci must be >= 1");
  const double inv_golden = (std::sqrt(5.0) - 1.0) / 2.0;
  std::vector<Vec3> raw;
  for (int i = 0; i < n_fibonacci; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n_fibonacci;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double turns = (i + 0.5) * inv_golden;
    turns -= std::floor(turns);
    const double phi = 2.0 * std::numbers::pi * turns;
    raw.push_back(Vec3(r * std::cos(phi), r * std::sin(phi), z).normalized());
  }
  raw.push_back(Vec3::UnitX());
  raw.push_back(Vec3::UnitY());
  raw.push_back(Vec3::UnitZ());

  std::vector<Vec3> out;
  for (const auto& d : raw) {
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Vec3& e) {
      return std::atan2(d.cross(e).norm(), d.dot(e)) < 1e-6;
    });
    if (!duplicate) out.push_back(d);
  }
  return out;
}

namespace {

Vec3 unit_normal(const TriangleMesh& mesh, std::size_t t) {
  const Vec3 n = (mesh.corner(t, 1) - mesh.corner(t, 0)).cross(mesh.corner(t, 2) - mesh.corner(t, 0));
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

template <class Occluded>
std::vector<std::uint8_t> visibility_impl(const TriangleMesh& mesh, const std::vector<SurfaceSample>& samples,
                                          const Vec3& axis, Occluded&& occluded) {
  const Vec3 dir = axis.normalized();
  std::vector<std::uint8_t> visible(mesh.triangle_count(), 1);
  for (const auto& s : samples) {
    if (!visible[s.triangle_id]) continue;
    const Vec3 base = s.position + kVisibilityNormalOffset * unit_normal(mesh, s.triangle_id);
    const Ray up{base + kVisibilityEpsilon * dir, dir};
    if (!occluded(up, s.triangle_id)) continue;
    const Ray down{base - kVisibilityEpsilon * dir, -dir};
    if (!occluded(down, s.triangle_id)) continue;
    visible[s.triangle_id] = 0;
  }
  return visible;
}

}  // namespace

std::vector<std::uint8_t> triangle_visibility(const Bvh& bvh, const std::vector<SurfaceSample>& samples,
                                              const Vec3& axis) {
  return visibility_impl(bvh.mesh(), samples, axis, [&](const Ray& r, std::uint32_t self) {
    return bvh.occluded(r, std::numeric_limits<double>::infinity(), self);
  });
}

std::vector<std::uint8_t> triangle_visibility_brute_force(const TriangleMesh& mesh,
                                                          const std::vector<SurfaceSample>& samples,
                                                          const Vec3& axis) {
  return visibility_impl(mesh, samples, axis,
                         [&](const Ray& r, std::uint32_t self) { return occluded_brute_force(mesh, r, self); });
}

VisibilityTable visibility_table(const Bvh& bvh, const std::vector<SurfaceSample>& samples,
                                 const std::vector<Vec3>& candidates) {
  VisibilityTable table;
  table.reserve(candidates.size());
  for (const auto& c : candidates) table.push_back(triangle_visibility(bvh, samples, c));
  return table;
}

std::vector<double> effective_areas(const VisibilityTable& visibility, const std::vector<double>& areas,
                                    EffectiveAreaMode mode) {
  const std::size_t n = areas.size();
  std::vector<double> count(n, 0.0);
  for (const auto& row : visibility) {
    if (row.size() != n) throw Error("visibility row size does not match triangle count");
    for (std::size_t t = 0; t < n; ++t) count[t] += row[t];
  }
  const double mean = n == 0 ? 0.0 : std::accumulate(count.begin(), count.end(), 0.0) / static_cast<double>(n);
  if (mean == 0.0) throw Error("fully occluded input");

  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double ratio = count[t] / mean;
    if (mode == EffectiveAreaMode::kInverse) ratio = count[t] > 0.0 ? mean / count[t] : 1.0;
    out[t] = areas[t] * std::max(ratio, 1.0);
  }
  return out;
}

AxisSelection greedy_select(const VisibilityTable& visibility, const std::vector<double>& effective,
                            const std::vector<Vec3>& candidates, double coverage_target) {
  if (!(coverage_target > 0.0 && coverage_target <= 1.0)) throw Error("coverage_target must lie in (0, 1]");
  if (visibility.size() != candidates.size()) throw Error("one visibility row per candidate required");
  const std::size_t n = effective.size();

  std::vector<std::uint8_t> ever_visible(n, 0);
  for (const auto& row : visibility)
    for (std::size_t t = 0; t < n; ++t) ever_visible[t] |= row[t];
  double total = 0.0, visible_total = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    total += effective[t];
    if (ever_visible[t]) visible_total += effective[t];
  }
  if (visible_total <= 0.0) throw Error("fully occluded input");

  AxisSelection sel;
  sel.visible_fraction = total > 0.0 ? visible_total / total : 0.0;

  std::vector<std::uint8_t> covered(n, 0);
  std::vector<std::uint8_t> used(candidates.size(), 0);
  double covered_area = 0.0;
  bool reached = false;
  for (std::size_t round = 0; round < candidates.size(); ++round) {
    std::size_t best = candidates.size();
    double best_reward = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      double reward = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        if (!covered[t] && visibility[i][t]) reward += effective[t];
      }
      if (reward > best_reward) {
        best_reward = reward;
        best = i;
      }
    }
    if (best == candidates.size()) break;  // nothing left to gain
    used[best] = 1;
    for (std::size_t t = 0; t < n; ++t) {
      if (visibility[best][t]) covered[t] = 1;
    }
    covered_area += best_reward;
    const double cumulative = std::min(1.0, covered_area / visible_total);
    sel.coverage_curve.push_back(cumulative);
    if (!reached) {
      sel.axes.push_back(DhfAxis::from_direction(candidates[best]));
      sel.candidate_indices.push_back(best);
      sel.per_axis_marginal_coverage.push_back(best_reward / visible_total);
      sel.cumulative_coverage.push_back(cumulative);
      sel.covered_fraction_of_total = total > 0.0 ? covered_area / total : 0.0;
      reached = covered_area >= coverage_target * visible_total;
    }
  }
  return sel;
}

AxisSelection greedy_select(const TriangleMesh& mesh, const SelectionOptions& options) {
  const Bvh bvh(mesh);
  const auto samples = sample_surface_points(mesh, options.seed);
  const auto candidates = candidate_directions(options.n_fibonacci);
  const auto table = visibility_table(bvh, samples, candidates);
  const auto eff = effective_areas(table, mesh.per_triangle_area, options.effective_area);
  return greedy_select(table, eff, candidates, options.coverage_target);
}

}  // namespace cndhf

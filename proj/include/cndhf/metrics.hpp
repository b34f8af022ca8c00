#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cndhf/bvh.hpp"
#include "cndhf/occupancy.hpp"

namespace cndhf {

/// Static 3-d tree for nearest-neighbour distance queries.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);
  /// Euclidean distance to the closest stored point.
  [[nodiscard]] double nearest_distance(const Vec3& q) const;

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    std::uint32_t left = 0, right = 0;
    int axis = -1;  // -1: leaf
    double split = 0.0;
  };
  std::uint32_t build(std::uint32_t begin, std::uint32_t end, int depth);
  void search(std::uint32_t node, const Vec3& q, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
};

/// Crossings of random lines with the surface: each line has a uniform
/// direction and passes through a uniform point of the disk of radius sqrt(3)
/// perpendicular to it, so every line that meets [-1,1]^3 can be drawn.
/// Throws "unstabbable surface" when 10 * count lines yield fewer than count points.
std::vector<Vec3> sample_by_ray_stabbing(const Bvh& mesh, std::size_t count, std::uint64_t seed);
std::vector<Vec3> sample_by_ray_stabbing(const CnDhfModel& model, std::size_t count, std::uint64_t seed,
                                         double step = kDefaultMarchStep);

/// 0.5 * mean_a min_b |a-b| + 0.5 * mean_b min_a |a-b|.
double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b);
double chamfer_l1_brute_force(std::span<const Vec3> a, std::span<const Vec3> b);
/// Symmetric Hausdorff distance.
double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b);
double hausdorff_brute_force(std::span<const Vec3> a, std::span<const Vec3> b);

using OccupancyFn = std::function<std::vector<std::uint8_t>(std::span<const Vec3>)>;

/// Ray parity along three fixed, slightly jittered directions; majority vote.
OccupancyFn mesh_occupancy(const Bvh& bvh);
OccupancyFn model_occupancy(const CnDhfModel& model);

/// |A and B| / |A or B| over the voxel centers of [-1,1]^3 at `resolution`.
double iou(const OccupancyFn& a, const OccupancyFn& b, int resolution);

struct MetricReport {
  std::string shape;
  double chamfer_l1 = 0.0;
  double iou = 0.0;
  double hausdorff = 0.0;
  std::size_t samples_model = 0;
  std::size_t samples_reference = 0;
  int iou_resolution = 0;
  std::uint64_t seed = 0;

  [[nodiscard]] double chamfer_x1e3() const { return chamfer_l1 * 1e3; }
};

struct EvalOptions {
  std::size_t samples = 100000;
  int iou_resolution = 128;
  std::uint64_t seed = 0;
};

/// Model against a reference mesh, both in the normalized frame.
MetricReport evaluate_model(const CnDhfModel& model, const Bvh& reference, const EvalOptions& options);

std::string report_json(const MetricReport& report);
/// Header plus one row per report.
std::string report_csv(std::span<const MetricReport> reports);

}  // namespace cndhf

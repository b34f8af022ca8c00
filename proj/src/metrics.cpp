#include "cndhf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "cndhf/error.hpp"

namespace cndhf {

namespace {
constexpr std::uint32_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  if (points_.empty()) throw Error("empty point set");
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  build(0, static_cast<std::uint32_t>(points_.size()), 0);
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end, int depth) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;
  Aabb box;
  for (std::uint32_t i = begin; i < end; ++i) box.extend(points_[i]);
  int axis = 0;
  box.extent().maxCoeff(&axis);
  (void)depth;
  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(points_.begin() + begin, points_.begin() + mid, points_.begin() + end,
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  const double split = points_[mid][axis];
  const std::uint32_t left = build(begin, mid, depth + 1);
  const std::uint32_t right = build(mid, end, depth + 1);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree::search(std::uint32_t node_id, const Vec3& q, double& best_sq) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) best_sq = std::min(best_sq, (q - points_[i]).squaredNorm());
    return;
  }
  const double d = q[node.axis] - node.split;
  const std::uint32_t near = d < 0.0 ? node.left : node.right;
  const std::uint32_t far = d < 0.0 ? node.right : node.left;
  search(near, q, best_sq);
  if (d * d <= best_sq) search(far, q, best_sq);
}

double KdTree::nearest_distance(const Vec3& q) const {
  double best_sq = std::numeric_limits<double>::infinity();
  search(0, q, best_sq);
  return std::sqrt(best_sq);
}

namespace {

struct Line {
  Vec3 origin;
  Vec3 direction;
  double length;
};

const double kSqrt3 = std::sqrt(3.0);

Line random_line(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double z = 2.0 * unit(rng) - 1.0;
  const double phi = 2.0 * M_PI * unit(rng);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vec3 d(s * std::cos(phi), s * std::sin(phi), z);
  const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = d.cross(helper).normalized();
  const Vec3 e2 = d.cross(e1);
  const double r = kSqrt3 * std::sqrt(unit(rng));
  const double theta = 2.0 * M_PI * unit(rng);
  const Vec3 offset = r * (std::cos(theta) * e1 + std::sin(theta) * e2);
  return {offset - kSqrt3 * d, d, 2.0 * kSqrt3};
}

// Parameter interval of the line inside [-1,1]^3, if any.
bool clip_to_cube(const Line& line, double& t0, double& t1) {
  t0 = 0.0;
  t1 = line.length;
  for (int k = 0; k < 3; ++k) {
    const double o = line.origin[k], d = line.direction[k];
    if (d == 0.0) {
      if (o < -1.0 || o > 1.0) return false;
      continue;
    }
    double a = (-1.0 - o) / d, b = (1.0 - o) / d;
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  return t0 < t1;
}

template <class Crossings>
std::vector<Vec3> stab(std::size_t count, std::uint64_t seed, Crossings&& crossings) {
  if (count == 0) throw Error("sample count must be at least 1");
  std::mt19937_64 rng(seed);
  std::vector<Vec3> points;
  points.reserve(count + 16);
  const std::size_t budget = 10 * count;
  for (std::size_t lines = 0; lines < budget && points.size() < count; ++lines) {
    crossings(random_line(rng), points);
  }
  if (points.size() < count) throw Error("unstabbable surface");
  points.resize(count);
  return points;
}

}  // namespace

std::vector<Vec3> sample_by_ray_stabbing(const Bvh& mesh, std::size_t count, std::uint64_t seed) {
  return stab(count, seed, [&](const Line& line, std::vector<Vec3>& out) {
    const Ray ray{line.origin, line.direction};
    for (const auto& hit : mesh.all_hits(ray)) out.push_back(ray.at(hit.t));
  });
}

std::vector<Vec3> sample_by_ray_stabbing(const CnDhfModel& model, std::size_t count, std::uint64_t seed,
                                         double step) {
  return stab(count, seed, [&](const Line& line, std::vector<Vec3>& out) {
    double t0 = 0.0, t1 = 0.0;
    if (!clip_to_cube(line, t0, t1)) return;
    const Ray ray{line.origin + t0 * line.direction, line.direction};
    const double length = t1 - t0;
    // Occupied cube faces count as surface, so the segment behaves as if it
    // started and ended outside.
    const Vec3 ends[2] = {ray.at(0.0), ray.at(length)};
    const auto occ = occupancy(model, ends);
    if (occ[0]) out.push_back(ends[0]);
    for (double t : raycast_all(model, ray, length, step)) out.push_back(ray.at(t));
    if (occ[1]) out.push_back(ends[1]);
  });
}

double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error("empty point set");
  const KdTree ta(a), tb(b);
  double sa = 0.0, sb = 0.0;
  for (const auto& p : a) sa += tb.nearest_distance(p);
  for (const auto& p : b) sb += ta.nearest_distance(p);
  return 0.5 * sa / static_cast<double>(a.size()) + 0.5 * sb / static_cast<double>(b.size());
}

namespace {
double brute_nearest(const Vec3& q, std::span<const Vec3> pts) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) best = std::min(best, (q - p).norm());
  return best;
}
}  // namespace

double chamfer_l1_brute_force(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error("empty point set");
  double sa = 0.0, sb = 0.0;
  for (const auto& p : a) sa += brute_nearest(p, b);
  for (const auto& p : b) sb += brute_nearest(p, a);
  return 0.5 * sa / static_cast<double>(a.size()) + 0.5 * sb / static_cast<double>(b.size());
}

double hausdorff(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error("empty point set");
  const KdTree ta(a), tb(b);
  double h = 0.0;
  for (const auto& p : a) h = std::max(h, tb.nearest_distance(p));
  for (const auto& p : b) h = std::max(h, ta.nearest_distance(p));
  return h;
}

double hausdorff_brute_force(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) throw Error("empty point set");
  double h = 0.0;
  for (const auto& p : a) h = std::max(h, brute_nearest(p, b));
  for (const auto& p : b) h = std::max(h, brute_nearest(p, a));
  return h;
}

OccupancyFn mesh_occupancy(const Bvh& bvh) {
  static const Vec3 kDirections[3] = {
      Vec3(1.0, 0.0123, 0.0371).normalized(),
      Vec3(0.0217, 1.0, -0.0089).normalized(),
      Vec3(-0.0311, 0.0157, 1.0).normalized(),
  };
  return [&bvh](std::span<const Vec3> points) {
    std::vector<std::uint8_t> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      int votes = 0;
      for (const auto& d : kDirections) votes += static_cast<int>(bvh.all_hits({points[i], d}).size() % 2);
      out[i] = votes >= 2 ? 1 : 0;
    }
    return out;
  };
}

OccupancyFn model_occupancy(const CnDhfModel& model) {
  return [&model](std::span<const Vec3> points) { return occupancy(model, points); };
}

double iou(const OccupancyFn& a, const OccupancyFn& b, int resolution) {
  if (resolution < 1) throw Error("resolution must be positive");
  const auto r = static_cast<std::size_t>(resolution);
  std::vector<Vec3> slice(r * r);
  std::size_t both = 0, either = 0;
  for (int k = 0; k < resolution; ++k) {
    for (int j = 0; j < resolution; ++j) {
      for (int i = 0; i < resolution; ++i) {
        slice[static_cast<std::size_t>(j) * r + static_cast<std::size_t>(i)] =
            Vec3(-1.0 + (2.0 * i + 1.0) / resolution, -1.0 + (2.0 * j + 1.0) / resolution,
                 -1.0 + (2.0 * k + 1.0) / resolution);
      }
    }
    const auto oa = a(slice), ob = b(slice);
    for (std::size_t p = 0; p < slice.size(); ++p) {
      both += (oa[p] && ob[p]) ? 1 : 0;
      either += (oa[p] || ob[p]) ? 1 : 0;
    }
  }
  if (either == 0) throw Error("both empty");
  return static_cast<double>(both) / static_cast<double>(either);
}

MetricReport evaluate_model(const CnDhfModel& model, const Bvh& reference, const EvalOptions& options) {
  MetricReport report;
  report.shape = model.shape_name;
  report.seed = options.seed;
  const auto model_points = sample_by_ray_stabbing(model, options.samples, options.seed);
  const auto mesh_points = sample_by_ray_stabbing(reference, options.samples, options.seed);
  report.chamfer_l1 = chamfer_l1(model_points, mesh_points);
  report.hausdorff = hausdorff(model_points, mesh_points);
  report.samples_model = model_points.size();
  report.samples_reference = mesh_points.size();
  report.iou_resolution = options.iou_resolution;
  report.iou = iou(model_occupancy(model), mesh_occupancy(reference), options.iou_resolution);
  return report;
}

std::string report_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["shape"] = report.shape;
  j["chamfer_l1_x1e3"] = report.chamfer_x1e3();
  j["chamfer_l1"] = report.chamfer_l1;
  j["iou"] = report.iou;
  j["hausdorff"] = report.hausdorff;
  j["samples_model"] = report.samples_model;
  j["samples_reference"] = report.samples_reference;
  j["iou_resolution"] = report.iou_resolution;
  j["seed"] = report.seed;
  return j.dump(2) + "\n";
}

std::string report_csv(std::span<const MetricReport> reports) {
  std::ostringstream out;
  out << std::setprecision(9);
  out << "shape,chamfer_l1_x1e3,iou,hausdorff,samples,iou_resolution,seed\n";
  for (const auto& r : reports) {
    out << r.shape << ',' << r.chamfer_x1e3() << ',' << r.iou << ',' << r.hausdorff << ',' << r.samples_model << ','
        << r.iou_resolution << ',' << r.seed << '\n';
  }
  return out.str();
}

}  // namespace cndhf

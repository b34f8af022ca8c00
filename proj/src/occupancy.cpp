#include "cndhf/occupancy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cndhf/binary_io.hpp"
#include "cndhf/error.hpp"

namespace cndhf {

namespace {

constexpr char kMagic[] = "CNDF";
constexpr std::uint32_t kVersion = 1;

void write_string(std::ostream& out, const std::string& s) {
  binio::write(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = binio::read<std::uint32_t>(in);
  if (n > (1u << 20)) throw Error("implausible string length in model bundle");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error("truncated model bundle");
  return s;
}

}  // namespace

Eigen::Matrix2Xd NeuralField::evaluate(const Eigen::Matrix2Xd& uv) const {
  return evaluate_batch(model_, uv.cast<float>()).cast<double>();
}

Eigen::Matrix2Xd RasterField::evaluate(const Eigen::Matrix2Xd& uv) const {
  const auto& r = raster_;
  Eigen::Matrix2Xd out(2, uv.cols());
  for (Eigen::Index k = 0; k < uv.cols(); ++k) {
    const double x = (uv(0, k) + 1.0) * 0.5 * r.width - 0.5;
    const double y = (uv(1, k) + 1.0) * 0.5 * r.height - 0.5;
    out.col(k) << kOutsideNear, kOutsideFar;
    if (!(x >= -0.5 && x <= r.width - 0.5 && y >= -0.5 && y <= r.height - 0.5)) continue;
    const int nx = std::clamp(static_cast<int>(std::lround(x)), 0, r.width - 1);
    const int ny = std::clamp(static_cast<int>(std::lround(y)), 0, r.height - 1);
    const std::size_t nearest = r.index(nx, ny);
    if (!r.valid[nearest]) continue;
    const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, r.width - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, r.height - 1);
    const int x1 = std::min(x0 + 1, r.width - 1), y1 = std::min(y0 + 1, r.height - 1);
    const double fx = std::clamp(x - x0, 0.0, 1.0), fy = std::clamp(y - y0, 0.0, 1.0);
    const std::size_t p00 = r.index(x0, y0), p10 = r.index(x1, y0), p01 = r.index(x0, y1), p11 = r.index(x1, y1);
    if (r.valid[p00] && r.valid[p10] && r.valid[p01] && r.valid[p11]) {
      auto lerp = [&](const std::vector<float>& g) {
        return (1 - fy) * ((1 - fx) * g[p00] + fx * g[p10]) + fy * ((1 - fx) * g[p01] + fx * g[p11]);
      };
      out.col(k) << lerp(r.h_near), lerp(r.h_far);
    } else {
      out.col(k) << r.h_near[nearest], r.h_far[nearest];
    }
  }
  return out;
}

Eigen::Matrix2Xd AnalyticField::evaluate(const Eigen::Matrix2Xd& uv) const {
  Eigen::Matrix2Xd out(2, uv.cols());
  for (Eigen::Index k = 0; k < uv.cols(); ++k) out.col(k) = fn_(uv(0, k), uv(1, k));
  return out;
}

FieldPtr sphere_field(double radius) {
  return std::make_shared<AnalyticField>([radius](double u, double v) -> Eigen::Vector2d {
    const double r2 = radius * radius - u * u - v * v;
    if (r2 < 0.0) return {kOutsideNear, kOutsideFar};
    const double h = std::sqrt(r2);
    return {-h, h};
  });
}

FieldPtr slab_field(double half_thickness) {
  return constant_field(-half_thickness, half_thickness);
}

FieldPtr constant_field(double h_near, double h_far) {
  return std::make_shared<AnalyticField>(
      [h_near, h_far](double, double) -> Eigen::Vector2d { return {h_near, h_far}; });
}

void CnDhfModel::validate() const {
  if (entries.empty()) throw Error("model has no entries");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i].axis;
    if (!entries[i].field) throw Error("model entry without a field");
    if ((a.rotation * a.direction - Vec3::UnitZ()).norm() > 1e-9) throw Error("axis rotation does not map to +Z");
    if ((a.rotation * a.rotation.transpose() - Mat3::Identity()).norm() > 1e-9 ||
        std::abs(a.rotation.determinant() - 1.0) > 1e-9) {
      throw Error("axis rotation is not in SO(3)");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const Vec3& b = entries[j].axis.direction;
      if (std::atan2(a.direction.cross(b).norm(), a.direction.dot(b)) <= 1e-6) {
        throw Error("model axes are not distinct");
      }
    }
  }
}

bool occupancy_single_axis(const ModelEntry& entry, const Vec3& p) {
  const Vec3 q = entry.axis.to_local(p);
  Eigen::Matrix2Xd uv(2, 1);
  uv << q.x(), q.y();
  const Eigen::Matrix2Xd h = entry.field->evaluate(uv);
  return h(0, 0) <= q.z() && q.z() <= h(1, 0);
}

std::vector<std::uint8_t> occupancy(const CnDhfModel& model, std::span<const Vec3> points) {
  std::vector<std::uint8_t> inside(points.size(), 1);
  std::vector<std::size_t> active(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) active[i] = i;
  for (const auto& entry : model.entries) {
    if (active.empty()) break;
    Eigen::Matrix2Xd uv(2, static_cast<Eigen::Index>(active.size()));
    std::vector<double> height(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Vec3 q = entry.axis.to_local(points[active[k]]);
      uv.col(static_cast<Eigen::Index>(k)) << q.x(), q.y();
      height[k] = q.z();
    }
    const Eigen::Matrix2Xd h = entry.field->evaluate(uv);
    std::vector<std::size_t> still;
    still.reserve(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      if (h(0, col) <= height[k] && height[k] <= h(1, col)) {
        still.push_back(active[k]);
      } else {
        inside[active[k]] = 0;
      }
    }
    active.swap(still);
  }
  return inside;
}

namespace {

bool occupied_at(const CnDhfModel& model, const Ray& ray, double t) {
  const Vec3 p = ray.at(t);
  return occupancy(model, std::span<const Vec3>(&p, 1))[0] != 0;
}

// Bisects [lo, hi] where the occupancy at lo is `lo_state` and differs at hi.
double refine(const CnDhfModel& model, const Ray& ray, double lo, double hi, bool lo_state) {
  for (int k = 0; k < kBisectionSteps; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (occupied_at(model, ray, mid) == lo_state) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> march_samples(double t_max, double step) {
  if (!(step > 0.0)) throw Error("march step must be positive");
  std::vector<double> ts;
  for (std::size_t k = 0;; ++k) {
    const double t = static_cast<double>(k) * step;
    if (t >= t_max) break;
    ts.push_back(t);
  }
  ts.push_back(t_max);
  return ts;
}

std::vector<std::uint8_t> occupancy_along(const CnDhfModel& model, const Ray& ray, const std::vector<double>& ts) {
  std::vector<Vec3> pts;
  pts.reserve(ts.size());
  for (double t : ts) pts.push_back(ray.at(t));
  return occupancy(model, pts);
}

}  // namespace

std::optional<double> raycast(const CnDhfModel& model, const Ray& ray, double t_max, double step) {
  const auto ts = march_samples(t_max, step);
  const auto occ = occupancy_along(model, ray, ts);
  if (occ[0]) return 0.0;
  for (std::size_t k = 1; k < ts.size(); ++k) {
    if (occ[k]) return refine(model, ray, ts[k - 1], ts[k], false);
  }
  return std::nullopt;
}

std::vector<double> raycast_all(const CnDhfModel& model, const Ray& ray, double t_max, double step) {
  const auto ts = march_samples(t_max, step);
  const auto occ = occupancy_along(model, ray, ts);
  std::vector<double> crossings;
  for (std::size_t k = 1; k < ts.size(); ++k) {
    if (occ[k] != occ[k - 1]) crossings.push_back(refine(model, ray, ts[k - 1], ts[k], occ[k - 1] != 0));
  }
  return crossings;
}

void write_model(const CnDhfModel& model, std::ostream& out) {
  model.validate();
  binio::write_magic(out, kMagic);
  binio::write(out, kVersion);
  write_string(out, model.shape_name);
  write_string(out, model.provenance);
  binio::write(out, model.normalization.scale);
  for (int k = 0; k < 3; ++k) binio::write(out, model.normalization.center[k]);
  binio::write(out, static_cast<std::uint32_t>(model.entries.size()));
  for (const auto& entry : model.entries) {
    const auto* neural = dynamic_cast<const NeuralField*>(entry.field.get());
    if (!neural) throw Error("only neural fields can be stored in a model bundle");
    std::ostringstream blob;
    write_checkpoint({entry.axis, neural->model()}, blob);
    const std::string bytes = blob.str();
    binio::write(out, static_cast<std::uint64_t>(bytes.size()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw Error("failed writing model bundle");
}

CnDhfModel read_model(std::istream& in) {
  binio::expect_magic(in, kMagic);
  if (const auto version = binio::read<std::uint32_t>(in); version != kVersion) {
    throw Error("unsupported model bundle version " + std::to_string(version));
  }
  CnDhfModel model;
  model.shape_name = read_string(in);
  model.provenance = read_string(in);
  model.normalization.scale = binio::read<double>(in);
  for (int k = 0; k < 3; ++k) model.normalization.center[k] = binio::read<double>(in);
  const auto n = binio::read<std::uint32_t>(in);
  if (n == 0 || n > 1024) throw Error("implausible entry count in model bundle");
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto size = binio::read<std::uint64_t>(in);
    if (size > (1ull << 32)) throw Error("implausible checkpoint size in model bundle");
    std::string bytes(size, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(size));
    if (!in) throw Error("truncated model bundle");
    std::istringstream blob(bytes);
    auto cp = read_checkpoint(blob);
    model.entries.push_back({cp.axis, std::make_shared<NeuralField>(std::move(cp.model))});
  }
  model.validate();
  return model;
}

void save_model(const CnDhfModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_model(model, out);
}

CnDhfModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read model bundle " + path.string());
  return read_model(in);
}

}  // namespace cndhf

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cndhf/bvh.hpp"
#include "cndhf/dhf_raster.hpp"
#include "cndhf/mesh.hpp"
#include "cndhf/siren.hpp"

namespace cndhf {

/// A double height field over the uv plane of one axis.
class HeightField {
 public:
  virtual ~HeightField() = default;
  /// uv is 2 x N; returns 2 x N rows (h_near, h_far).
  [[nodiscard]] virtual Eigen::Matrix2Xd evaluate(const Eigen::Matrix2Xd& uv) const = 0;
};

using FieldPtr = std::shared_ptr<const HeightField>;

class NeuralField final : public HeightField {
 public:
  explicit NeuralField(SirenModel model) : model_(std::move(model)) {}
  [[nodiscard]] Eigen::Matrix2Xd evaluate(const Eigen::Matrix2Xd& uv) const override;
  [[nodiscard]] const SirenModel& model() const { return model_; }

 private:
  SirenModel model_;
};

/// Bilinear lookup into a baked raster. Where the nearest pixel is invalid, or
/// uv leaves the raster, the outside convention (+1, -1) is returned; where
/// only some of the four surrounding pixels are valid, the nearest pixel is used.
class RasterField final : public HeightField {
 public:
  explicit RasterField(HeightFieldRaster raster) : raster_(std::move(raster)) {}
  [[nodiscard]] Eigen::Matrix2Xd evaluate(const Eigen::Matrix2Xd& uv) const override;
  [[nodiscard]] const HeightFieldRaster& raster() const { return raster_; }

 private:
  HeightFieldRaster raster_;
};

/// Closed-form field, used for analytic stand-ins.
class AnalyticField final : public HeightField {
 public:
  using Fn = std::function<Eigen::Vector2d(double u, double v)>;
  explicit AnalyticField(Fn fn) : fn_(std::move(fn)) {}
  [[nodiscard]] Eigen::Matrix2Xd evaluate(const Eigen::Matrix2Xd& uv) const override;

 private:
  Fn fn_;
};

/// Exact double height field of a sphere of `radius` centred at the origin.
FieldPtr sphere_field(double radius);
/// h_near = -half_thickness, h_far = +half_thickness everywhere.
FieldPtr slab_field(double half_thickness);
/// Constant outputs.
FieldPtr constant_field(double h_near, double h_far);

struct ModelEntry {
  DhfAxis axis;
  FieldPtr field;
};

/// Shape as the intersection of per-axis double height fields.
struct CnDhfModel {
  std::vector<ModelEntry> entries;
  NormalizationTransform normalization;
  std::string shape_name;
  std::string provenance;

  /// Throws unless there is at least one entry, axes are pairwise distinct and
  /// every rotation maps its axis to +Z.
  void validate() const;
};

/// 1 iff h_near <= (R p)_z <= h_far at uv = ((R p)_x, (R p)_y).
bool occupancy_single_axis(const ModelEntry& entry, const Vec3& p);

/// Minimum over entries of the per-axis occupancy, in entry order; points
/// already outside skip the remaining entries.
std::vector<std::uint8_t> occupancy(const CnDhfModel& model, std::span<const Vec3> points);

/// One GT pixel of a 512^2 bake.
inline constexpr double kDefaultMarchStep = 2.0 / 512.0;
inline constexpr int kBisectionSteps = 20;

/// First entry into the occupied set along the ray within [0, t_max]. Returns 0
/// when the origin is already inside.
std::optional<double> raycast(const CnDhfModel& model, const Ray& ray, double t_max,
                              double step = kDefaultMarchStep);

/// Every occupancy change along the ray within [0, t_max], refined by bisection.
std::vector<double> raycast_all(const CnDhfModel& model, const Ray& ray, double t_max,
                                double step = kDefaultMarchStep);

/// Bundle of neural checkpoints with the normalization and axis order.
void write_model(const CnDhfModel& model, std::ostream& out);
CnDhfModel read_model(std::istream& in);
void save_model(const CnDhfModel& model, const std::filesystem::path& path);
CnDhfModel load_model(const std::filesystem::path& path);

}  // namespace cndhf

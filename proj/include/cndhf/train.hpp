#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cndhf/dhf_raster.hpp"
#include "cndhf/error.hpp"
#include "cndhf/siren.hpp"

namespace cndhf {

enum class OutsideMode {
  kHinge,             // max(0, h_far - h_near + C) where the line misses the shape
  kRegressConstants,  // l1 towards h_near = +1, h_far = -1 outside
};

enum class BatchMode { kFullRaster, kPatch };

struct LossConfig {
  double lambda_lap = 10.0;
  double margin_c = 0.1;
  OutsideMode outside = OutsideMode::kHinge;
};

struct TrainConfig {
  int iterations = 20000;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lambda_lap = 10.0;
  double margin_c = 0.1;
  OutsideMode outside = OutsideMode::kHinge;
  BatchMode batch = BatchMode::kFullRaster;
  int patch_size = 64;
  std::uint64_t seed = 0;
  int log_every = 100;
  /// Iterations after which `on_checkpoint` fires (the final iteration always does).
  std::vector<int> checkpoint_at = {10000, 100000, 1000000};
  std::function<void(int iteration, const SirenModel&)> on_checkpoint;

  [[nodiscard]] LossConfig loss() const { return {lambda_lap, margin_c, outside}; }
};

/// Ground truth laid out for full-grid loss evaluation at pixel centers.
template <class Scalar>
struct TrainingTarget {
  using Matrix = typename SirenParams<Scalar>::Matrix;
  int width = 0;
  int height = 0;
  Matrix uv;                        // 2 x N pixel centers
  Matrix heights;                   // 2 x N ground truth (near, far)
  std::vector<std::uint8_t> valid;  // ground truth exists
  std::vector<std::uint8_t> laplacian_support;
  Matrix laplacian;                 // 2 x N ground-truth Laplacian on the support

  static TrainingTarget from_raster(const HeightFieldRaster& raster);
  /// Sub-window [x0, x0+w) x [y0, y0+h) with its own Laplacian support.
  [[nodiscard]] TrainingTarget crop(int x0, int y0, int w, int h) const;
};

template <class Scalar>
struct LossResult {
  double total = 0.0;
  double reg = 0.0;
  double lap = 0.0;
  SirenParams<Scalar> gradient;
  /// Per-pixel sign of every piecewise-linear residual (l1, hinge, Laplacian);
  /// a change between two parameter vectors means a kink was crossed.
  std::vector<std::int8_t> branch;
};

/// L = L_reg + lambda * L_lap with hand-derived gradients. L_reg averages over
/// all pixels (both channels for the l1 term, one hinge term per outside
/// pixel); L_lap averages |lap(pred) - lap(gt)| over the support and channels.
template <class Scalar>
LossResult<Scalar> loss_and_gradients(const SirenParams<Scalar>& model, const TrainingTarget<Scalar>& target,
                                      const LossConfig& config, bool want_gradient = true,
                                      ForwardCache<Scalar>* workspace = nullptr);

struct TrainLogEntry {
  int iteration = 0;
  double reg = 0.0;
  double lap = 0.0;
  double total = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<TrainLogEntry> log;
  double wall_seconds = 0.0;
  double best_loss = 0.0;
  double final_valid_l1 = 0.0;
};

/// Thrown when the loss becomes NaN or infinite.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(int iteration, double value);
  int iteration;
};

struct TrainResult {
  SirenModel model;
  TrainReport report;
};

/// Adam on `gt` (already at the training resolution).
TrainResult train(SirenModel model, const HeightFieldRaster& gt, const TrainConfig& config);

/// Evaluates the field on the pixel grid; valid iff h_near <= h_far, heights
/// clamped to [-1, 1].
HeightFieldRaster predict_raster(const SirenModel& model, const DhfAxis& axis, int width, int height);

/// Mean over ground-truth-valid pixels of the channel-averaged absolute error.
double valid_pixel_l1(const HeightFieldRaster& prediction, const HeightFieldRaster& gt);

/// Intersection over union of the two valid masks (1 if both are empty).
double mask_iou(const HeightFieldRaster& a, const HeightFieldRaster& b);

}  // namespace cndhf

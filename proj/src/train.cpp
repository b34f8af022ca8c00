#include "cndhf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <string>

#include "cndhf/error.hpp"

namespace cndhf {

namespace {

template <class T>
int sign_of(T x) {
  return (x > T(0)) - (x < T(0));
}

}  // namespace

NonFiniteLoss::NonFiniteLoss(int it, double value)
    : Error("non-finite loss " + std::to_string(value) + " at iteration " + std::to_string(it)), iteration(it) {}

template <class Scalar>
TrainingTarget<Scalar> TrainingTarget<Scalar>::from_raster(const HeightFieldRaster& raster) {
  TrainingTarget t;
  t.width = raster.width;
  t.height = raster.height;
  const auto n = static_cast<Eigen::Index>(raster.pixel_count());
  t.uv.resize(2, n);
  t.heights.resize(2, n);
  t.valid = raster.valid;
  for (int j = 0; j < raster.height; ++j) {
    for (int i = 0; i < raster.width; ++i) {
      const auto p = static_cast<Eigen::Index>(raster.index(i, j));
      const Vec2 uv = raster.uv(i, j);
      t.uv(0, p) = static_cast<Scalar>(uv.x());
      t.uv(1, p) = static_cast<Scalar>(uv.y());
      t.heights(0, p) = static_cast<Scalar>(raster.h_near[p]);
      t.heights(1, p) = static_cast<Scalar>(raster.h_far[p]);
    }
  }
  t.laplacian = Matrix::Zero(2, n);
  t.laplacian_support.assign(static_cast<std::size_t>(n), 0);
  if (raster.width >= 3 && raster.height >= 3) {
    for (int c = 0; c < 2; ++c) {
      const auto& h = c == 0 ? raster.h_near : raster.h_far;
      const std::vector<double> image(h.begin(), h.end());
      const auto lap = numerical_laplacian(image, raster.valid, raster.width, raster.height);
      t.laplacian_support = lap.support;
      for (Eigen::Index p = 0; p < n; ++p) t.laplacian(c, p) = static_cast<Scalar>(lap.values[p]);
    }
  }
  return t;
}

template <class Scalar>
TrainingTarget<Scalar> TrainingTarget<Scalar>::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 1 || h < 1 || x0 + w > width || y0 + h > height) throw Error("crop out of range");
  TrainingTarget t;
  t.width = w;
  t.height = h;
  const Eigen::Index n = static_cast<Eigen::Index>(w) * h;
  t.uv.resize(2, n);
  t.heights.resize(2, n);
  t.laplacian = Matrix::Zero(2, n);
  t.valid.assign(static_cast<std::size_t>(n), 0);
  t.laplacian_support.assign(static_cast<std::size_t>(n), 0);
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const Eigen::Index src = static_cast<Eigen::Index>(y0 + j) * width + (x0 + i);
      const Eigen::Index dst = static_cast<Eigen::Index>(j) * w + i;
      t.uv.col(dst) = uv.col(src);
      t.heights.col(dst) = heights.col(src);
      t.valid[dst] = valid[src];
      // The stencil must stay inside the window.
      if (i > 0 && j > 0 && i + 1 < w && j + 1 < h && laplacian_support[src]) {
        t.laplacian_support[dst] = 1;
        t.laplacian.col(dst) = laplacian.col(src);
      }
    }
  }
  return t;
}

template struct TrainingTarget<float>;
template struct TrainingTarget<double>;

template <class Scalar>
LossResult<Scalar> loss_and_gradients(const SirenParams<Scalar>& model, const TrainingTarget<Scalar>& target,
                                      const LossConfig& config, bool want_gradient,
                                      ForwardCache<Scalar>* workspace) {
  using Matrix = typename SirenParams<Scalar>::Matrix;
  const Eigen::Index n = target.uv.cols();
  const int w = target.width;
  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& cache = workspace ? *workspace : local;
  const Matrix y = forward(model, target.uv, want_gradient ? &cache : nullptr);

  LossResult<Scalar> out;
  out.branch.assign(static_cast<std::size_t>(4 * n), 0);
  Matrix dy = Matrix::Zero(2, n);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double margin = config.margin_c;

  double reg_sum = 0.0;
  for (Eigen::Index p = 0; p < n; ++p) {
    const double yn = y(0, p), yf = y(1, p);
    const bool regress = target.valid[p] || config.outside == OutsideMode::kRegressConstants;
    if (regress) {
      const double gn = target.valid[p] ? double(target.heights(0, p)) : double(kOutsideNear);
      const double gf = target.valid[p] ? double(target.heights(1, p)) : double(kOutsideFar);
      const double rn = yn - gn, rf = yf - gf;
      reg_sum += 0.5 * (std::abs(rn) + std::abs(rf));
      out.branch[4 * p] = static_cast<std::int8_t>(sign_of(rn));
      out.branch[4 * p + 1] = static_cast<std::int8_t>(sign_of(rf));
      dy(0, p) += static_cast<Scalar>(0.5 * sign_of(rn) * inv_n);
      dy(1, p) += static_cast<Scalar>(0.5 * sign_of(rf) * inv_n);
    } else {
      const double arg = yf - yn + margin;
      out.branch[4 * p] = static_cast<std::int8_t>(sign_of(arg));
      if (arg > 0.0) {
        reg_sum += arg;
        dy(0, p) -= static_cast<Scalar>(inv_n);
        dy(1, p) += static_cast<Scalar>(inv_n);
      }
    }
  }
  out.reg = reg_sum * inv_n;

  std::size_t support = 0;
  for (auto s : target.laplacian_support) support += s;
  double lap_sum = 0.0;
  if (support > 0) {
    const double scale = config.lambda_lap / (2.0 * static_cast<double>(support));
    for (Eigen::Index p = 0; p < n; ++p) {
      if (!target.laplacian_support[p]) continue;
      const Eigen::Index nbr[4] = {p - 1, p + 1, p - w, p + w};
      for (int c = 0; c < 2; ++c) {
        const double pred = double(y(c, nbr[0])) + y(c, nbr[1]) + y(c, nbr[2]) + y(c, nbr[3]) - 4.0 * y(c, p);
        const double r = pred - double(target.laplacian(c, p));
        lap_sum += std::abs(r);
        out.branch[4 * p + 2 + c] = static_cast<std::int8_t>(sign_of(r));
        const auto g = static_cast<Scalar>(sign_of(r) * scale);
        // The stencil is symmetric, so its adjoint scatters the same weights.
        dy(c, p) -= 4 * g;
        for (auto q : nbr) dy(c, q) += g;
      }
    }
    out.lap = lap_sum / (2.0 * static_cast<double>(support));
  }
  out.total = out.reg + config.lambda_lap * out.lap;
  if (want_gradient) out.gradient = backward(model, cache, dy);
  return out;
}

template LossResult<float> loss_and_gradients(const SirenParams<float>&, const TrainingTarget<float>&,
                                              const LossConfig&, bool, ForwardCache<float>*);
template LossResult<double> loss_and_gradients(const SirenParams<double>&, const TrainingTarget<double>&,
                                               const LossConfig&, bool, ForwardCache<double>*);

TrainResult train(SirenModel model, const HeightFieldRaster& gt, const TrainConfig& config) {
  if (config.iterations < 1) throw Error("iterations must be >= 1");
  if (config.lambda_lap < 0.0) throw Error("lambda_lap must be >= 0");
  if (!(config.margin_c > 0.0)) throw Error("margin_c must be > 0");
  if (gt.valid_count() == 0) throw Error("ground-truth raster has no valid pixels");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  const auto full = TrainingTarget<float>::from_raster(gt);
  const LossConfig loss_config = config.loss();
  std::mt19937_64 rng(config.seed);
  const int patch_w = std::min(config.patch_size, gt.width);
  const int patch_h = std::min(config.patch_size, gt.height);

  SirenModel m1 = model.zeros_like(), m2 = model.zeros_like();
  auto params = model.blocks();
  auto first = m1.blocks();
  auto second = m2.blocks();

  ForwardCache<float> workspace;
  TrainReport report;
  report.best_loss = std::numeric_limits<double>::infinity();
  const auto b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
  for (int it = 1; it <= config.iterations; ++it) {
    LossResult<float> loss;
    if (config.batch == BatchMode::kPatch) {
      const int x0 = std::uniform_int_distribution<int>(0, gt.width - patch_w)(rng);
      const int y0 = std::uniform_int_distribution<int>(0, gt.height - patch_h)(rng);
      loss = loss_and_gradients(model, full.crop(x0, y0, patch_w, patch_h), loss_config, true, &workspace);
    } else {
      loss = loss_and_gradients(model, full, loss_config, true, &workspace);
    }
    if (!std::isfinite(loss.total)) throw NonFiniteLoss(it, loss.total);
    report.best_loss = std::min(report.best_loss, loss.total);
    if (it == 1 || it % std::max(1, config.log_every) == 0 || it == config.iterations) {
      report.log.push_back(
          {it, loss.reg, loss.lap, loss.total, std::chrono::duration<double>(Clock::now() - start).count()});
    }

    const double c1 = 1.0 - std::pow(config.beta1, it);
    const double c2 = 1.0 - std::pow(config.beta2, it);
    const auto step = static_cast<float>(config.learning_rate / c1);
    const auto inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
    const auto eps = static_cast<float>(config.adam_epsilon);
    auto grads = loss.gradient.blocks();
    for (std::size_t b = 0; b < params.size(); ++b) {
      Eigen::Map<Eigen::ArrayXf> theta(params[b].data(), static_cast<Eigen::Index>(params[b].size()));
      Eigen::Map<Eigen::ArrayXf> m(first[b].data(), theta.size());
      Eigen::Map<Eigen::ArrayXf> v(second[b].data(), theta.size());
      Eigen::Map<const Eigen::ArrayXf> g(grads[b].data(), theta.size());
      m = b1 * m + (1.0f - b1) * g;
      v = b2 * v + (1.0f - b2) * g.square();
      theta -= step * m / (v.sqrt() * inv_sqrt_c2 + eps);
    }

    if (config.on_checkpoint &&
        (it == config.iterations ||
         std::find(config.checkpoint_at.begin(), config.checkpoint_at.end(), it) != config.checkpoint_at.end())) {
      config.on_checkpoint(it, model);
    }
  }
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  report.final_valid_l1 = valid_pixel_l1(predict_raster(model, gt.axis, gt.width, gt.height), gt);
  return {std::move(model), std::move(report)};
}

HeightFieldRaster predict_raster(const SirenModel& model, const DhfAxis& axis, int width, int height) {
  auto raster = HeightFieldRaster::empty(width, height, axis);
  Eigen::Matrix2Xf uv(2, static_cast<Eigen::Index>(raster.pixel_count()));
  for (int j = 0; j < height; ++j) {
    for (int i = 0; i < width; ++i) {
      const Vec2 c = raster.uv(i, j);
      uv.col(static_cast<Eigen::Index>(raster.index(i, j))) = c.cast<float>();
    }
  }
  const Eigen::Matrix2Xf h = evaluate_batch(model, uv);
  for (std::size_t p = 0; p < raster.pixel_count(); ++p) {
    const float near = h(0, static_cast<Eigen::Index>(p)), far = h(1, static_cast<Eigen::Index>(p));
    raster.valid[p] = near <= far ? 1 : 0;
    raster.h_near[p] = std::clamp(near, -1.0f, 1.0f);
    raster.h_far[p] = std::clamp(far, -1.0f, 1.0f);
  }
  return raster;
}

double valid_pixel_l1(const HeightFieldRaster& prediction, const HeightFieldRaster& gt) {
  if (prediction.width != gt.width || prediction.height != gt.height) throw Error("raster size mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < gt.pixel_count(); ++p) {
    if (!gt.valid[p]) continue;
    sum += 0.5 * (std::abs(double(prediction.h_near[p]) - gt.h_near[p]) +
                  std::abs(double(prediction.h_far[p]) - gt.h_far[p]));
    ++count;
  }
  if (count == 0) throw Error("ground truth has no valid pixels");
  return sum / static_cast<double>(count);
}

double mask_iou(const HeightFieldRaster& a, const HeightFieldRaster& b) {
  if (a.pixel_count() != b.pixel_count()) throw Error("raster size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    inter += a.valid[p] && b.valid[p];
    uni += a.valid[p] || b.valid[p];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace cndhf

#include "cndhf/siren.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "cndhf/binary_io.hpp"
#include "cndhf/error.hpp"

namespace cndhf {

namespace {

constexpr char kMagic[] = "CNDN";
constexpr std::uint32_t kVersion = 1;
constexpr Eigen::Index kChunk = 4096;

}  // namespace

std::size_t parameter_count_for_width(int width) {
  const auto w = static_cast<std::size_t>(width);
  return 2 * w + w + (kHiddenLayers - 1) * (w * w + w) + 2 * w + 2;
}

SirenModel init_model(int width, std::uint64_t seed, double omega0, double omega_hidden) {
  if (width < 1) throw Error("network width must be >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double bound) {
    return static_cast<float>(std::uniform_real_distribution<double>(-bound, bound)(rng));
  };

  SirenModel model;
  model.omega0 = omega0;
  model.omega_hidden = omega_hidden;
  std::vector<int> dims{2};
  for (int l = 0; l < kHiddenLayers; ++l) dims.push_back(width);
  dims.push_back(2);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l], fan_out = dims[l + 1];
    const double w_bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega_hidden;
    const double b_bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    SirenModel::Matrix w(fan_out, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = uniform(w_bound);
    SirenModel::Vector b(fan_out);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = uniform(b_bound);
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
  }
  return model;
}

template <class Scalar>
typename SirenParams<Scalar>::Matrix forward(const SirenParams<Scalar>& model,
                                             const typename SirenParams<Scalar>::Matrix& uv,
                                             ForwardCache<Scalar>* cache) {
  using Matrix = typename SirenParams<Scalar>::Matrix;
  const std::size_t hidden = model.layer_count() - 1;
  ForwardCache<Scalar> local;
  ForwardCache<Scalar>& c = cache ? *cache : local;
  c.inputs.resize(model.layer_count());
  c.cosines.resize(hidden);
  c.inputs[0] = uv;
  for (std::size_t l = 0; l < hidden; ++l) {
    const auto omega = static_cast<Scalar>(l == 0 ? model.omega0 : model.omega_hidden);
    const Matrix w = omega * model.weights[l];
    c.pre.noalias() = w * c.inputs[l];
    c.pre.colwise() += omega * model.biases[l];
    if (cache) c.cosines[l] = c.pre.array().cos().matrix();
    c.inputs[l + 1] = c.pre.array().sin().matrix();
  }
  Matrix out = model.weights.back() * c.inputs.back();
  out.colwise() += model.biases.back();
  return out;
}

template <class Scalar>
SirenParams<Scalar> backward(const SirenParams<Scalar>& model, ForwardCache<Scalar>& cache,
                             const typename SirenParams<Scalar>::Matrix& d_out) {
  using Matrix = typename SirenParams<Scalar>::Matrix;
  SirenParams<Scalar> grad = model.zeros_like();
  const std::size_t last = model.layer_count() - 1;
  grad.weights[last].noalias() = d_out * cache.inputs[last].transpose();
  grad.biases[last] = d_out.rowwise().sum();
  Matrix* g = &cache.grad_a;
  Matrix* spare = &cache.grad_b;
  g->noalias() = model.weights[last].transpose() * d_out;
  for (std::size_t l = last; l-- > 0;) {
    const auto omega = static_cast<Scalar>(l == 0 ? model.omega0 : model.omega_hidden);
    // d/d(pre-activation) = omega * cos(.) * g; omega is applied to the small products.
    g->array() *= cache.cosines[l].array();
    grad.weights[l].noalias() = *g * cache.inputs[l].transpose();
    grad.weights[l] *= omega;
    grad.biases[l] = omega * g->rowwise().sum();
    if (l > 0) {
      const Matrix wt = omega * model.weights[l].transpose();
      spare->noalias() = wt * *g;
      std::swap(g, spare);
    }
  }
  return grad;
}

template SirenParams<float>::Matrix forward(const SirenParams<float>&, const SirenParams<float>::Matrix&,
                                            ForwardCache<float>*);
template SirenParams<double>::Matrix forward(const SirenParams<double>&, const SirenParams<double>::Matrix&,
                                             ForwardCache<double>*);
template SirenParams<float> backward(const SirenParams<float>&, ForwardCache<float>&,
                                     const SirenParams<float>::Matrix&);
template SirenParams<double> backward(const SirenParams<double>&, ForwardCache<double>&,
                                      const SirenParams<double>::Matrix&);

namespace {

// Inference pass. Hidden layers are zero-padded to a multiple of 16 rows so
// every product and sine runs on full SIMD packets; a point then evaluates to
// the same bits alone or anywhere inside a batch (blocked GEMM, GEMV and the
// scalar tails of vectorized sin all differ in the last bits).
constexpr Eigen::Index kPadRows = 16;

SirenModel::Matrix infer(const SirenModel& model, const SirenModel::Matrix& uv) {
  using Matrix = SirenModel::Matrix;
  const Eigen::Index w = model.hidden_width();
  const Eigen::Index padded = (w + kPadRows - 1) / kPadRows * kPadRows;
  Matrix x = uv, pre;
  for (std::size_t l = 0; l + 1 < model.layer_count(); ++l) {
    const auto omega = static_cast<float>(l == 0 ? model.omega0 : model.omega_hidden);
    Matrix weight = Matrix::Zero(padded, x.rows());
    weight.topLeftCorner(w, model.weights[l].cols()) = omega * model.weights[l];
    SirenModel::Vector bias = SirenModel::Vector::Zero(padded);
    bias.head(w) = omega * model.biases[l];
    pre.noalias() = weight.lazyProduct(x);
    pre.colwise() += bias;
    x = pre.array().sin().matrix();
  }
  Matrix last = Matrix::Zero(2, padded);
  last.leftCols(w) = model.weights.back();
  Matrix out = last.lazyProduct(x);
  out.colwise() += model.biases.back();
  return out;
}

}  // namespace

Eigen::Vector2d evaluate(const SirenModel& model, const Vec2& uv) {
  SirenModel::Matrix x(2, 1);
  x << static_cast<float>(uv.x()), static_cast<float>(uv.y());
  const auto y = infer(model, x);
  return {y(0, 0), y(1, 0)};
}

Eigen::Matrix2Xf evaluate_batch(const SirenModel& model, const Eigen::Matrix2Xf& uv) {
  Eigen::Matrix2Xf out(2, uv.cols());
  for (Eigen::Index start = 0; start < uv.cols(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, uv.cols() - start);
    const SirenModel::Matrix block = uv.middleCols(start, n);
    out.middleCols(start, n) = infer(model, block);
  }
  return out;
}

void write_checkpoint(const NeuralCheckpoint& cp, std::ostream& out) {
  binio::write_magic(out, kMagic);
  binio::write(out, kVersion);
  for (int k = 0; k < 3; ++k) binio::write(out, cp.axis.direction[k]);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) binio::write(out, cp.axis.rotation(r, c));
  binio::write(out, cp.model.omega0);
  binio::write(out, cp.model.omega_hidden);
  binio::write(out, static_cast<std::uint32_t>(cp.model.layer_count()));
  for (std::size_t l = 0; l < cp.model.layer_count(); ++l) {
    const auto& w = cp.model.weights[l];
    binio::write(out, static_cast<std::uint32_t>(w.rows()));
    binio::write(out, static_cast<std::uint32_t>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) binio::write(out, w(r, c));
    for (Eigen::Index r = 0; r < w.rows(); ++r) binio::write(out, cp.model.biases[l](r));
  }
  if (!out) throw Error("failed writing checkpoint");
}

NeuralCheckpoint read_checkpoint(std::istream& in) {
  binio::expect_magic(in, kMagic);
  if (const auto version = binio::read<std::uint32_t>(in); version != kVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  NeuralCheckpoint cp;
  for (int k = 0; k < 3; ++k) cp.axis.direction[k] = binio::read<double>(in);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cp.axis.rotation(r, c) = binio::read<double>(in);
  cp.model.omega0 = binio::read<double>(in);
  cp.model.omega_hidden = binio::read<double>(in);
  const auto layers = binio::read<std::uint32_t>(in);
  if (layers < 2 || layers > 64) throw Error("implausible layer count in checkpoint");
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto rows = binio::read<std::uint32_t>(in);
    const auto cols = binio::read<std::uint32_t>(in);
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) throw Error("implausible layer shape in checkpoint");
    SirenModel::Matrix w(rows, cols);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = binio::read<float>(in);
    SirenModel::Vector b(rows);
    for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = binio::read<float>(in);
    if (l > 0 && cols != cp.model.weights.back().rows()) throw Error("layer shapes do not chain in checkpoint");
    cp.model.weights.push_back(std::move(w));
    cp.model.biases.push_back(std::move(b));
  }
  if (cp.model.weights.front().cols() != 2 || cp.model.weights.back().rows() != 2) {
    throw Error("checkpoint is not a (u, v) -> (h_near, h_far) network");
  }
  return cp;
}

void save_checkpoint(const NeuralCheckpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_checkpoint(checkpoint, out);
}

NeuralCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace cndhf

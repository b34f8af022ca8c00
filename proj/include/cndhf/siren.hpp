#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "cndhf/axis_select.hpp"

namespace cndhf {

inline constexpr int kHiddenLayers = 5;
inline constexpr double kDefaultOmega = 30.0;

/// Width presets spanning the 5k..40k per-model parameter tiers.
inline constexpr int kWidthPresets[] = {17, 31, 45, 65, 93, 130};

/// Sine-activated MLP (u, v) -> (h_near, h_far): five hidden layers of equal
/// width with sin(omega * (W x + b)) activations and a linear output layer.
template <class Scalar>
struct SirenParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  double omega0 = kDefaultOmega;
  double omega_hidden = kDefaultOmega;
  std::vector<Matrix> weights;  // layer l maps in -> out, stored out x in
  std::vector<Vector> biases;

  [[nodiscard]] int hidden_width() const { return weights.empty() ? 0 : static_cast<int>(weights.front().rows()); }
  [[nodiscard]] std::size_t layer_count() const { return weights.size(); }
  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// Same architecture with all parameters zero.
  [[nodiscard]] SirenParams zeros_like() const {
    SirenParams z;
    z.omega0 = omega0;
    z.omega_hidden = omega_hidden;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      z.weights.push_back(Matrix::Zero(weights[l].rows(), weights[l].cols()));
      z.biases.push_back(Vector::Zero(biases[l].size()));
    }
    return z;
  }

  template <class Other>
  [[nodiscard]] SirenParams<Other> cast() const {
    SirenParams<Other> out;
    out.omega0 = omega0;
    out.omega_hidden = omega_hidden;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.weights.push_back(weights[l].template cast<Other>());
      out.biases.push_back(biases[l].template cast<Other>());
    }
    return out;
  }

  /// Every weight matrix and bias vector as a flat span, in layer order.
  [[nodiscard]] std::vector<std::span<Scalar>> blocks() {
    std::vector<std::span<Scalar>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.emplace_back(weights[l].data(), static_cast<std::size_t>(weights[l].size()));
      out.emplace_back(biases[l].data(), static_cast<std::size_t>(biases[l].size()));
    }
    return out;
  }

  bool operator==(const SirenParams& o) const {
    if (omega0 != o.omega0 || omega_hidden != o.omega_hidden || weights.size() != o.weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols()) return false;
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    }
    return true;
  }
};

/// Stored model precision; training and inference run in float.
using SirenModel = SirenParams<float>;

/// 2w + w + 4(w^2 + w) + 2w + 2.
std::size_t parameter_count_for_width(int width);

/// SIREN initialization: first layer U(-1/2, 1/2); later layers
/// U(-sqrt(6/w)/omega, sqrt(6/w)/omega); biases U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
SirenModel init_model(int width, std::uint64_t seed, double omega0 = kDefaultOmega,
                      double omega_hidden = kDefaultOmega);

/// Activations kept by a forward pass for backpropagation. Reusing one cache
/// across passes of equal batch size avoids reallocating the buffers.
template <class Scalar>
struct ForwardCache {
  std::vector<typename SirenParams<Scalar>::Matrix> inputs;  // input to each layer
  std::vector<typename SirenParams<Scalar>::Matrix> cosines;  // cos(omega (W x + b)) per hidden layer
  typename SirenParams<Scalar>::Matrix pre;
  typename SirenParams<Scalar>::Matrix grad_a, grad_b;
};

/// Evaluates a 2 x N batch of uv columns; returns 2 x N (row 0 h_near, row 1 h_far).
template <class Scalar>
typename SirenParams<Scalar>::Matrix forward(const SirenParams<Scalar>& model,
                                             const typename SirenParams<Scalar>::Matrix& uv,
                                             ForwardCache<Scalar>* cache = nullptr);

/// Accumulates parameter gradients for upstream gradient `d_out` (2 x N).
template <class Scalar>
SirenParams<Scalar> backward(const SirenParams<Scalar>& model, ForwardCache<Scalar>& cache,
                             const typename SirenParams<Scalar>::Matrix& d_out);

/// Single-point convenience evaluation: (h_near, h_far).
Eigen::Vector2d evaluate(const SirenModel& model, const Vec2& uv);

/// Evaluates many points in fixed-size column chunks.
Eigen::Matrix2Xf evaluate_batch(const SirenModel& model, const Eigen::Matrix2Xf& uv);

/// A trained field together with the axis it encodes.
struct NeuralCheckpoint {
  DhfAxis axis;
  SirenModel model;
  bool operator==(const NeuralCheckpoint& o) const {
    return axis.direction == o.axis.direction && axis.rotation == o.axis.rotation && model == o.model;
  }
};

void write_checkpoint(const NeuralCheckpoint& checkpoint, std::ostream& out);
NeuralCheckpoint read_checkpoint(std::istream& in);
void save_checkpoint(const NeuralCheckpoint& checkpoint, const std::filesystem::path& path);
NeuralCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cndhf

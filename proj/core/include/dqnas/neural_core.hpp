#pragma once

// Minimal recurrent Q-network: two LSTM layers with inverted dropout followed by a
// dense head with one output per vocabulary action. Everything is float64.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "dqnas/hashing.hpp"

namespace dqnas::nn {

using Rng = std::mt19937_64;

/// Dense row-major array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

struct QNetShape {
  std::size_t input_width = 8;
  std::size_t hidden = 100;
  std::size_t output_width = 0;
  double dropout_rate = 0.3;

  bool operator==(const QNetShape&) const = default;
};

enum class Block : std::uint8_t {
  Lstm1Kernel,
  Lstm1Recurrent,
  Lstm1Bias,
  Lstm2Kernel,
  Lstm2Recurrent,
  Lstm2Bias,
  OutputKernel,
  OutputBias,
};
inline constexpr std::size_t kBlockCount = 8;

struct BlockLayout {
  std::string_view name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

/// All weights of one Q-network in a single flat buffer; copies are deep.
///
/// LSTM blocks use gate order (input, forget, cell, output): kernel [in x 4H],
/// recurrent kernel [H x 4H], bias [4H]. The head is kernel [H x V] plus bias [V].
class QNetParams {
 public:
  QNetParams() = default;
  explicit QNetParams(const QNetShape& shape);

  /// Every weight and bias drawn uniformly from [-scale, scale].
  static QNetParams uniform(const QNetShape& shape, std::uint64_t seed, double scale = 0.08);

  const QNetShape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  const BlockLayout& layout(Block b) const { return layouts_[static_cast<std::size_t>(b)]; }
  std::span<const BlockLayout> layouts() const { return layouts_; }

  /// {first LSTM, second LSTM, dense head}.
  std::array<std::size_t, 3> layer_parameter_counts() const;

  bool operator==(const QNetParams& o) const { return shape_ == o.shape_ && values_ == o.values_; }

  // "DQNASQN1", u64 header length, JSON header, little-endian float64 values.
  Blob serialize() const;
  static QNetParams deserialize(std::span<const std::uint8_t> bytes);

 private:
  QNetShape shape_;
  std::array<BlockLayout, kBlockCount> layouts_{};
  std::vector<double> values_;
};

/// Q-values for a state of dims [T x W] (or [W], read as T = 1).
/// Dropout is applied only when `train_mode` is set, which then needs `rng`.
/// Throws DimensionMismatch.
Tensor qnet_forward(const QNetParams& p, const Tensor& state, bool train_mode,
                    Rng* rng = nullptr);

struct TrainSample {
  Tensor state;
  std::size_t action = 0;
  double target = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n, double lr = 1e-3) : m(n, 0.0), v(n, 0.0), learning_rate(lr) {}

  bool operator==(const AdamState&) const = default;
};

void adam_update(std::span<double> params, std::span<const double> grad, AdamState& opt);

/// Mean over the batch of (Q(state)[action] - target)^2, dropout off.
double qnet_loss(const QNetParams& p, std::span<const TrainSample> batch);

/// Loss plus its gradient w.r.t. every parameter (written into `grad`).
/// Dropout is active iff `dropout_rng` is non-null.
double qnet_loss_and_gradient(const QNetParams& p, std::span<const TrainSample> batch,
                              std::vector<double>& grad, Rng* dropout_rng = nullptr);

/// One Adam step on the batch loss; returns the loss before the update.
/// Throws NonFiniteLoss without touching `p` or `opt`.
double qnet_train_step(QNetParams& p, std::span<const TrainSample> batch, AdamState& opt,
                       Rng* dropout_rng = nullptr);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t checked = 0;
};

/// Analytic gradient vs central differences on `num_params` randomly chosen
/// parameters spread over every block; relative error uses max(|a|, |n|, 1e-8).
/// Always runs with dropout off.
GradientCheckResult gradient_check(const QNetParams& p, const TrainSample& sample,
                                   std::size_t num_params = 128, std::uint64_t seed = 0,
                                   double step = 1e-5);

}  // namespace dqnas::nn

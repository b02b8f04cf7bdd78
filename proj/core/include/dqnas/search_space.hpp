#pragma once

// Layer vocabulary of the architecture search space and the bijection between
// integer action indices and layer specifications.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dqnas {

enum class LayerKind : std::uint8_t {
  Conv2D,
  Conv2DTranspose,
  SeparableConv2D,
  DepthwiseConv2D,
  MaxPool2D,
  AvgPool2D,
  GlobalMaxPool2D,
  GlobalAvgPool2D,
  Dropout,
  BatchNorm,
  Flatten,
  Dense,
  OutputDense,
  Terminate,
};
inline constexpr std::size_t kLayerKindCount = 14;

inline constexpr std::array<LayerKind, kLayerKindCount> kAllLayerKinds = {
    LayerKind::Conv2D,          LayerKind::Conv2DTranspose,
    LayerKind::SeparableConv2D, LayerKind::DepthwiseConv2D,
    LayerKind::MaxPool2D,       LayerKind::AvgPool2D,
    LayerKind::GlobalMaxPool2D, LayerKind::GlobalAvgPool2D,
    LayerKind::Dropout,         LayerKind::BatchNorm,
    LayerKind::Flatten,         LayerKind::Dense,
    LayerKind::OutputDense,     LayerKind::Terminate,
};

enum class Padding : std::uint8_t { Same, Valid };
enum class Initializer : std::uint8_t { HeNormal, HeUniform, RandomNormal, RandomUniform };
enum class Regularizer : std::uint8_t { L1, L2, L1L2 };
// Softmax is only legal on the output layer; it is not part of the dense domain.
enum class Activation : std::uint8_t { Sigmoid, Tanh, Relu, Elu, Selu, Swish, Softmax };

constexpr std::size_t ordinal(LayerKind k) { return static_cast<std::size_t>(k); }

constexpr bool is_conv(LayerKind k) {
  return k == LayerKind::Conv2D || k == LayerKind::Conv2DTranspose ||
         k == LayerKind::SeparableConv2D || k == LayerKind::DepthwiseConv2D;
}
constexpr bool is_global_pool(LayerKind k) {
  return k == LayerKind::GlobalMaxPool2D || k == LayerKind::GlobalAvgPool2D;
}
constexpr bool is_pool(LayerKind k) {
  return k == LayerKind::MaxPool2D || k == LayerKind::AvgPool2D || is_global_pool(k);
}

std::string_view to_string(LayerKind k);
std::string_view to_string(Padding p);
std::string_view to_string(Initializer i);
std::string_view to_string(Regularizer r);
std::string_view to_string(Activation a);

LayerKind parse_layer_kind(std::string_view s);
Padding parse_padding(std::string_view s);
Initializer parse_initializer(std::string_view s);
Regularizer parse_regularizer(std::string_view s);
Activation parse_activation(std::string_view s);

/// One layer of a candidate network. Fields that do not apply to `kind` stay empty.
struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::optional<int> filters;
  std::optional<int> kernel_size;
  std::optional<int> strides;
  std::optional<Padding> padding;
  std::optional<Initializer> kernel_init;
  std::optional<Initializer> bias_init;
  std::optional<Regularizer> regularizer;
  std::optional<int> pool_size;
  std::optional<double> dropout_rate;
  std::optional<int> units;
  std::optional<Activation> activation;

  bool operator==(const LayerSpec&) const = default;

  static LayerSpec conv(LayerKind kind, int filters, int kernel, int strides, Padding padding,
                        Initializer kernel_init, Initializer bias_init, Regularizer reg);
  static LayerSpec depthwise(int kernel, int strides, Padding padding, Initializer kernel_init,
                             Initializer bias_init, Regularizer reg);
  static LayerSpec pool(LayerKind kind, int pool_size, int strides, Padding padding);
  static LayerSpec global_pool(LayerKind kind, Padding padding);
  static LayerSpec dropout(double rate);
  static LayerSpec batch_norm();
  static LayerSpec flatten();
  static LayerSpec dense(int units, Activation activation);
  static LayerSpec output(int units, Activation activation);
  static LayerSpec terminate();
};

/// Output layer that closes every architecture: softmax for more than two classes.
LayerSpec output_layer_for(int num_classes);

// Tuple form, e.g. ["conv2d", 96, 5, 3, "valid", "HeUniform", "RandomUniform", "l2"],
// "Flatten" or [10, "softmax"].
nlohmann::json to_tuple(const LayerSpec& spec);
// `is_last` disambiguates the untagged [units, activation] form.
LayerSpec layer_from_tuple(const nlohmann::json& j, bool is_last);

nlohmann::json architecture_to_json(std::span<const LayerSpec> arch);
std::vector<LayerSpec> architecture_from_json(const nlohmann::json& j);
std::string architecture_to_string(std::span<const LayerSpec> arch);

// Which value list of VocabularyConfig a field draws from.
enum class Param : std::uint8_t {
  Filters,
  KernelSize,
  ConvStrides,
  Padding,
  KernelInit,
  BiasInit,
  Regularizer,
  PoolStrides,
  PoolSize,
  DropoutRate,
  DenseUnits,
  Activation,
};

/// Parameters a kind carries, in field-declaration order.
std::span<const Param> params_of(LayerKind kind);

struct VocabularyConfig {
  // Enabled kinds; OutputDense is never sampled and may not be listed.
  std::vector<LayerKind> kinds;
  std::vector<int> filters{16, 32, 64, 96, 128, 160, 192, 224, 256};
  std::vector<int> kernel_sizes{3, 5, 7, 9};
  std::vector<int> conv_strides{2, 3};
  std::vector<Padding> paddings{Padding::Same, Padding::Valid};
  std::vector<Initializer> kernel_initializers{Initializer::HeNormal, Initializer::HeUniform,
                                               Initializer::RandomNormal,
                                               Initializer::RandomUniform};
  std::vector<Initializer> bias_initializers{Initializer::HeNormal, Initializer::HeUniform,
                                             Initializer::RandomNormal,
                                             Initializer::RandomUniform};
  std::vector<Regularizer> regularizers{Regularizer::L1, Regularizer::L2, Regularizer::L1L2};
  std::vector<int> pool_sizes{2, 3, 4, 5};
  std::vector<int> pool_strides{2, 3, 4, 5};
  std::vector<double> dropout_rates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> dense_units{8, 16, 32, 64, 128, 256, 512};
  std::vector<Activation> activations{Activation::Sigmoid, Activation::Tanh, Activation::Relu,
                                      Activation::Elu,     Activation::Selu, Activation::Swish};

  VocabularyConfig();

  // Throws ConfigError on empty or duplicated lists.
  void validate() const;
  std::size_t domain_size(Param p) const;
  bool kind_enabled(LayerKind k) const;

  bool operator==(const VocabularyConfig&) const = default;
};

void to_json(nlohmann::json& j, const VocabularyConfig& cfg);
void from_json(const nlohmann::json& j, VocabularyConfig& cfg);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool empty() const { return begin == end; }
  std::size_t size() const { return end - begin; }
};

/// Immutable, ordered enumeration of every selectable LayerSpec.
class ActionVocabulary {
 public:
  explicit ActionVocabulary(VocabularyConfig cfg);

  std::size_t size() const { return entries_.size(); }
  const VocabularyConfig& config() const { return cfg_; }
  std::span<const LayerSpec> entries() const { return entries_; }

  // Throws IndexOutOfRange.
  const LayerSpec& decode(std::size_t index) const;
  // Throws UnknownSpec.
  std::size_t encode(const LayerSpec& spec) const;
  std::optional<std::size_t> find(const LayerSpec& spec) const;

  /// Contiguous index block holding every entry of `kind` (empty when disabled).
  IndexRange range(LayerKind kind) const { return ranges_[ordinal(kind)]; }

  /// Zero-based position of the spec's value for `p` within the configured domain.
  std::optional<std::size_t> param_ordinal(const LayerSpec& spec, Param p) const;

 private:
  VocabularyConfig cfg_;
  std::vector<LayerSpec> entries_;
  std::array<IndexRange, kLayerKindCount> ranges_{};
};

ActionVocabulary build_vocabulary(const VocabularyConfig& cfg);
std::size_t encode_action(const ActionVocabulary& vocab, const LayerSpec& spec);
LayerSpec decode_action(const ActionVocabulary& vocab, std::size_t index);

}  // namespace dqnas

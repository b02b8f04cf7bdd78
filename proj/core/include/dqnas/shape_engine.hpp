#pragma once

// Shape propagation and parameter counting for sequential CNN layer lists.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dqnas/error.hpp"
#include "dqnas/search_space.hpp"

namespace dqnas {

struct TensorShape {
  std::int64_t h = 1;
  std::int64_t w = 1;
  std::int64_t c = 1;
  // After Flatten, h = w = 1 and c holds the feature count.
  bool flattened = false;

  std::int64_t elements() const { return h * w * c; }
  bool operator==(const TensorShape&) const = default;
};

// Parses "28x28x1".
TensorShape parse_shape(std::string_view text);
std::string to_string(const TensorShape& s);

enum class FailureReason : std::uint8_t { NegativeDimension, KernelExceedsInput, ConstraintViolation };
std::string_view to_string(FailureReason r);

class ShapeError : public Error {
 public:
  ShapeError(FailureReason reason, const std::string& what) : Error(what), reason_(reason) {}
  FailureReason reason() const { return reason_; }

 private:
  FailureReason reason_;
};

/// Output shape of one layer. Throws ShapeError.
///
/// Valid padding: floor((in - k) / s) + 1, same padding: ceil(in / s); transposed
/// convolution inverts those (valid: (in - 1) * s + k, same: in * s). Global pooling
/// keeps rank and yields (1, 1, c). Dense and the output layer need a flattened input.
TensorShape infer_layer_shape(const LayerSpec& spec, const TensorShape& in);

/// Trainable parameters of one layer given its input shape, biases included.
std::int64_t layer_parameter_count(const LayerSpec& spec, const TensorShape& in);

struct ValidationReport {
  bool valid = false;
  std::optional<std::size_t> failing_index;
  std::optional<FailureReason> reason;
  std::optional<TensorShape> final_shape;
  std::optional<std::int64_t> parameter_count;
  std::string message;
};

nlohmann::json to_json(const ValidationReport& r);

/// Folds infer_layer_shape over `arch`; the first failure is reported, never thrown.
ValidationReport validate_architecture(std::span<const LayerSpec> arch, const TensorShape& input);

/// Throws InvalidArchitecture when the architecture does not validate.
std::int64_t count_parameters(std::span<const LayerSpec> arch, const TensorShape& input);

}  // namespace dqnas

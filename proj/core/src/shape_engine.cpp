#include "dqnas/shape_engine.hpp"

#include <charconv>
#include <vector>

namespace dqnas {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

[[noreturn]] void fail(FailureReason reason, const std::string& what) {
  throw ShapeError(reason, what);
}

std::int64_t spatial_out(std::int64_t in, int k, int s, Padding pad, bool transpose) {
  if (transpose) return pad == Padding::Valid ? (in - 1) * s + k : in * s;
  if (pad == Padding::Same) return ceil_div(in, s);
  if (k > in) {
    fail(FailureReason::KernelExceedsInput,
         "kernel " + std::to_string(k) + " exceeds input extent " + std::to_string(in));
  }
  return (in - k) / s + 1;
}

TensorShape windowed(const TensorShape& in, int k, int s, Padding pad, bool transpose,
                     std::int64_t channels) {
  TensorShape out;
  out.h = spatial_out(in.h, k, s, pad, transpose);
  out.w = spatial_out(in.w, k, s, pad, transpose);
  out.c = channels;
  if (out.h < 1 || out.w < 1 || out.c < 1) {
    fail(FailureReason::NegativeDimension, "non-positive output dimension " + to_string(out));
  }
  return out;
}

void require_spatial(const LayerSpec& spec, const TensorShape& in) {
  if (in.flattened) {
    fail(FailureReason::ConstraintViolation,
         std::string(to_string(spec.kind)) + " cannot follow a flattened tensor");
  }
}

void require_flat(const LayerSpec& spec, const TensorShape& in) {
  if (!in.flattened) {
    fail(FailureReason::ConstraintViolation,
         std::string(to_string(spec.kind)) + " needs a flattened input");
  }
}

}  // namespace

TensorShape parse_shape(std::string_view text) {
  std::vector<std::int64_t> dims;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t next = text.find_first_of("xX", pos);
    if (next == std::string_view::npos) next = text.size();
    std::int64_t v = 0;
    const auto part = text.substr(pos, next - pos);
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc{} || ptr != part.data() + part.size() || v < 1) {
      throw ParseError("bad shape '" + std::string(text) + "', expected HxWxC");
    }
    dims.push_back(v);
    pos = next + 1;
  }
  if (dims.size() != 3) throw ParseError("bad shape '" + std::string(text) + "', expected HxWxC");
  return TensorShape{dims[0], dims[1], dims[2], false};
}

std::string to_string(const TensorShape& s) {
  if (s.flattened) return "(" + std::to_string(s.c) + ")";
  return "(" + std::to_string(s.h) + "," + std::to_string(s.w) + "," + std::to_string(s.c) + ")";
}

std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::NegativeDimension: return "NegativeDimension";
    case FailureReason::KernelExceedsInput: return "KernelExceedsInput";
    case FailureReason::ConstraintViolation: return "ConstraintViolation";
  }
  return "Unknown";
}

TensorShape infer_layer_shape(const LayerSpec& spec, const TensorShape& in) {
  switch (spec.kind) {
    case LayerKind::Conv2D:
    case LayerKind::SeparableConv2D:
      require_spatial(spec, in);
      return windowed(in, spec.kernel_size.value(), spec.strides.value(), spec.padding.value(),
                      false, spec.filters.value());
    case LayerKind::Conv2DTranspose:
      require_spatial(spec, in);
      return windowed(in, spec.kernel_size.value(), spec.strides.value(), spec.padding.value(),
                      true, spec.filters.value());
    case LayerKind::DepthwiseConv2D:
      require_spatial(spec, in);
      return windowed(in, spec.kernel_size.value(), spec.strides.value(), spec.padding.value(),
                      false, in.c);
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
      require_spatial(spec, in);
      return windowed(in, spec.pool_size.value(), spec.strides.value(), spec.padding.value(),
                      false, in.c);
    case LayerKind::GlobalMaxPool2D:
    case LayerKind::GlobalAvgPool2D:
      require_spatial(spec, in);
      return TensorShape{1, 1, in.c, false};
    case LayerKind::Flatten:
      return TensorShape{1, 1, in.elements(), true};
    case LayerKind::Dense:
    case LayerKind::OutputDense:
      require_flat(spec, in);
      if (spec.units.value() < 1) fail(FailureReason::NegativeDimension, "dense layer without units");
      return TensorShape{1, 1, spec.units.value(), true};
    case LayerKind::Dropout:
    case LayerKind::BatchNorm:
    case LayerKind::Terminate:
      return in;
  }
  return in;
}

std::int64_t layer_parameter_count(const LayerSpec& spec, const TensorShape& in) {
  const std::int64_t c_in = in.c;
  switch (spec.kind) {
    case LayerKind::Conv2D:
    case LayerKind::Conv2DTranspose: {
      // The transposed kernel is (k, k, filters, c_in); same element count.
      const std::int64_t k = spec.kernel_size.value();
      const std::int64_t f = spec.filters.value();
      return (k * k * c_in + 1) * f;
    }
    case LayerKind::SeparableConv2D: {
      const std::int64_t k = spec.kernel_size.value();
      return k * k * c_in + (c_in + 1) * spec.filters.value();
    }
    case LayerKind::DepthwiseConv2D: {
      const std::int64_t k = spec.kernel_size.value();
      return (k * k + 1) * c_in;
    }
    case LayerKind::Dense:
    case LayerKind::OutputDense:
      return (c_in + 1) * spec.units.value();
    case LayerKind::BatchNorm:
      return 4 * c_in;
    default:
      return 0;
  }
}

nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json j{{"valid", r.valid}};
  if (r.failing_index) j["failing_index"] = *r.failing_index;
  if (r.reason) j["reason"] = std::string(to_string(*r.reason));
  if (r.final_shape) {
    const auto& s = *r.final_shape;
    j["final_shape"] = {{"h", s.h}, {"w", s.w}, {"c", s.c}, {"flattened", s.flattened}};
  }
  if (r.parameter_count) j["parameter_count"] = *r.parameter_count;
  if (!r.message.empty()) j["message"] = r.message;
  return j;
}

ValidationReport validate_architecture(std::span<const LayerSpec> arch, const TensorShape& input) {
  ValidationReport report;
  if (arch.empty()) {
    report.failing_index = 0;
    report.reason = FailureReason::ConstraintViolation;
    report.message = "empty architecture";
    return report;
  }
  TensorShape shape = input;
  std::int64_t params = 0;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    try {
      params += layer_parameter_count(arch[i], shape);
      shape = infer_layer_shape(arch[i], shape);
    } catch (const ShapeError& e) {
      report.failing_index = i;
      report.reason = e.reason();
      report.message = e.what();
      return report;
    }
  }
  if (arch.back().kind != LayerKind::OutputDense) {
    report.failing_index = arch.size() - 1;
    report.reason = FailureReason::ConstraintViolation;
    report.message = "architecture does not end with the output layer";
    return report;
  }
  report.valid = true;
  report.final_shape = shape;
  report.parameter_count = params;
  return report;
}

std::int64_t count_parameters(std::span<const LayerSpec> arch, const TensorShape& input) {
  const ValidationReport r = validate_architecture(arch, input);
  if (!r.valid) throw InvalidArchitecture("cannot count parameters: " + r.message);
  return *r.parameter_count;
}

}  // namespace dqnas

#pragma once

// Second, independent shape/parameter calculator used as a test oracle. It is
// written directly from the convolution-arithmetic formulas and shares no code
// with the engine's shape inference.

#include <cstdint>
#include <optional>
#include <vector>

#include "dqnas/search_space.hpp"

namespace ref {

struct Shape {
  std::int64_t h = 0, w = 0, c = 0;
  bool flat = false;
};

struct Outcome {
  bool ok = false;
  std::size_t fail_at = 0;
  Shape shape;
  std::int64_t params = 0;
  std::vector<Shape> trace;  // output shape of each accepted layer
};

inline std::optional<std::int64_t> axis(std::int64_t in, std::int64_t k, std::int64_t s, bool same,
                                        bool transposed) {
  std::int64_t out;
  if (transposed) {
    out = same ? in * s : (in - 1) * s + k;
  } else if (same) {
    out = in / s + (in % s != 0 ? 1 : 0);
  } else {
    if (k > in) return std::nullopt;
    out = (in - k) / s + 1;
  }
  if (out < 1) return std::nullopt;
  return out;
}

inline Outcome run(const std::vector<dqnas::LayerSpec>& arch, Shape in) {
  using K = dqnas::LayerKind;
  Outcome o;
  Shape s = in;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const auto& l = arch[i];
    const bool same = l.padding && *l.padding == dqnas::Padding::Same;
    Shape n = s;
    std::int64_t p = 0;
    auto spatial = [&](std::int64_t k, std::int64_t st, bool tr) {
      if (s.flat) return false;
      auto h = axis(s.h, k, st, same, tr);
      auto w = axis(s.w, k, st, same, tr);
      if (!h || !w) return false;
      n.h = *h;
      n.w = *w;
      return true;
    };
    bool good = true;
    switch (l.kind) {
      case K::Conv2D:
        good = spatial(*l.kernel_size, *l.strides, false);
        n.c = *l.filters;
        p = *l.kernel_size * *l.kernel_size * s.c * *l.filters + *l.filters;
        break;
      case K::Conv2DTranspose:
        good = spatial(*l.kernel_size, *l.strides, true);
        n.c = *l.filters;
        p = *l.kernel_size * *l.kernel_size * *l.filters * s.c + *l.filters;
        break;
      case K::SeparableConv2D:
        good = spatial(*l.kernel_size, *l.strides, false);
        n.c = *l.filters;
        p = *l.kernel_size * *l.kernel_size * s.c + s.c * *l.filters + *l.filters;
        break;
      case K::DepthwiseConv2D:
        good = spatial(*l.kernel_size, *l.strides, false);
        p = *l.kernel_size * *l.kernel_size * s.c + s.c;
        break;
      case K::MaxPool2D:
      case K::AvgPool2D:
        good = spatial(*l.pool_size, *l.strides, false);
        break;
      case K::GlobalMaxPool2D:
      case K::GlobalAvgPool2D:
        good = !s.flat;
        n.h = n.w = 1;
        break;
      case K::Flatten:
        n = Shape{1, 1, s.h * s.w * s.c, true};
        break;
      case K::Dense:
      case K::OutputDense:
        good = s.flat;
        n.c = *l.units;
        p = s.c * *l.units + *l.units;
        break;
      case K::BatchNorm:
        p = 2 * s.c + 2 * s.c;
        break;
      case K::Dropout:
      case K::Terminate:
        break;
    }
    if (!good) {
      o.fail_at = i;
      return o;
    }
    o.params += p;
    o.trace.push_back(n);
    s = n;
  }
  if (arch.empty() || arch.back().kind != K::OutputDense) {
    o.fail_at = arch.empty() ? 0 : arch.size() - 1;
    return o;
  }
  o.ok = true;
  o.shape = s;
  return o;
}

}  // namespace ref

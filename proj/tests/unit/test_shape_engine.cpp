#include <doctest.h>

#include <random>

#include "dqnas/shape_engine.hpp"
#include "reference_shapes.hpp"
#include "test_util.hpp"

using namespace dqnas;
using testutil::conv;

namespace {

const TensorShape kMnist{28, 28, 1, false};

}  // namespace

TEST_SUITE("shape_engine") {

TEST_CASE("single-layer shapes") {
  CHECK(infer_layer_shape(conv(16, 3, 2, Padding::Valid), kMnist) == TensorShape{13, 13, 16, false});
  CHECK(infer_layer_shape(conv(16, 3, 2, Padding::Same), kMnist) == TensorShape{14, 14, 16, false});
  CHECK(infer_layer_shape(conv(160, 7, 2, Padding::Valid, LayerKind::Conv2DTranspose), kMnist) ==
        TensorShape{61, 61, 160, false});
  CHECK(infer_layer_shape(conv(160, 7, 2, Padding::Same, LayerKind::Conv2DTranspose), kMnist) ==
        TensorShape{56, 56, 160, false});
  CHECK(infer_layer_shape(LayerSpec::global_pool(LayerKind::GlobalAvgPool2D, Padding::Valid),
                          TensorShape{13, 13, 64, false}) == TensorShape{1, 1, 64, false});
  CHECK(infer_layer_shape(LayerSpec::flatten(), TensorShape{3, 4, 5, false}) ==
        TensorShape{1, 1, 60, true});
  const auto dw = LayerSpec::depthwise(3, 2, Padding::Same, Initializer::HeNormal, Initializer::HeNormal,
                                       Regularizer::L1);
  CHECK(infer_layer_shape(dw, TensorShape{9, 9, 7, false}) == TensorShape{5, 5, 7, false});
}

TEST_CASE("a 7x7 kernel does not fit a 5x5 image") {
  for (LayerKind k : {LayerKind::Conv2D, LayerKind::SeparableConv2D}) {
    for (int kernel : {7, 9}) {
      try {
        infer_layer_shape(conv(32, kernel, 2, Padding::Valid, k), TensorShape{5, 5, 8, false});
        FAIL("expected a shape error");
      } catch (const ShapeError& e) {
        CHECK(e.reason() == FailureReason::KernelExceedsInput);
      }
    }
  }
  // 28 -k9 s3 valid-> 7 -k3 s1 valid-> 5, then a 7x7 kernel.
  const std::vector<LayerSpec> arch{conv(16, 9, 3, Padding::Valid), conv(16, 3, 1, Padding::Valid),
                                    conv(16, 7, 2, Padding::Valid), LayerSpec::flatten(),
                                    output_layer_for(10)};
  const ValidationReport r = validate_architecture(arch, kMnist);
  CHECK_FALSE(r.valid);
  CHECK(r.failing_index == 2u);
  CHECK(r.reason == FailureReason::KernelExceedsInput);
}

TEST_CASE("stacked k9 s3 valid convolutions fail at the second layer") {
  const std::vector<LayerSpec> arch{conv(16, 9, 3, Padding::Valid), conv(16, 9, 3, Padding::Valid),
                                    conv(16, 9, 3, Padding::Valid), LayerSpec::flatten(),
                                    output_layer_for(10)};
  const ValidationReport r = validate_architecture(arch, kMnist);
  CHECK_FALSE(r.valid);
  CHECK(r.failing_index == 1u);  // 28 -> 7, then k9 > 7
  CHECK(r.reason == FailureReason::KernelExceedsInput);
}

TEST_CASE("same-padding conv then flatten") {
  const std::vector<LayerSpec> arch{conv(32, 3, 2, Padding::Same), LayerSpec::flatten(), output_layer_for(10)};
  const ValidationReport r = validate_architecture(arch, kMnist);
  REQUIRE(r.valid);
  CHECK(r.final_shape == TensorShape{1, 1, 10, true});
  CHECK(*r.parameter_count == (9 + 1) * 32 + (14 * 14 * 32 + 1) * 10);
}

TEST_CASE("parameter counts per layer") {
  CHECK(layer_parameter_count(LayerSpec::output(10, Activation::Softmax), TensorShape{1, 1, 100, true}) == 1010);
  CHECK(layer_parameter_count(conv(16, 3, 2, Padding::Valid), kMnist) == 160);
  CHECK(layer_parameter_count(LayerSpec::dropout(0.3), kMnist) == 0);
  CHECK(layer_parameter_count(LayerSpec::batch_norm(), TensorShape{4, 4, 8, false}) == 32);
  CHECK(layer_parameter_count(conv(8, 3, 2, Padding::Same, LayerKind::SeparableConv2D),
                              TensorShape{9, 9, 4, false}) == 9 * 4 + 5 * 8);
}

TEST_CASE("MNIST row-1 trace") {
  // 28 -T7s2v-> 61 -T9s2v-> 129 -S5s3s-> 43 -T7s3s-> 129 -C5s3v-> 42 -S9s2s-> 21
  const auto row = testutil::mnist_row1();
  TensorShape s = kMnist;
  const std::vector<TensorShape> expected{{61, 61, 160, false},  {129, 129, 128, false},
                                          {43, 43, 96, false},   {129, 129, 192, false},
                                          {42, 42, 96, false},   {21, 21, 128, false},
                                          {1, 1, 56448, true},   {1, 1, 10, true}};
  const std::vector<std::int64_t> params{8000, 1659008, 15584, 903360, 460896, 20192, 0, 564490};
  for (std::size_t i = 0; i < row.size(); ++i) {
    CHECK(layer_parameter_count(row[i], s) == params[i]);
    s = infer_layer_shape(row[i], s);
    CHECK(s == expected[i]);
  }
  const ValidationReport r = validate_architecture(row, kMnist);
  REQUIRE(r.valid);
  CHECK(*r.parameter_count == 3631530);
  CHECK(count_parameters(row, kMnist) == 3631530);
}

TEST_CASE("count_parameters rejects invalid architectures") {
  const std::vector<LayerSpec> arch{conv(16, 9, 3, Padding::Valid), conv(16, 9, 3, Padding::Valid),
                                    LayerSpec::flatten(), output_layer_for(10)};
  CHECK_THROWS_AS(count_parameters(arch, kMnist), InvalidArchitecture);
  const std::vector<LayerSpec> no_tail{conv(16, 3, 2, Padding::Same)};
  CHECK_FALSE(validate_architecture(no_tail, kMnist).valid);
}

TEST_CASE("agreement with the reference calculator on random sequences") {
  const ActionVocabulary vocab = build_vocabulary(VocabularyConfig{});
  std::mt19937_64 rng(11);
  std::size_t valid = 0;
  for (int i = 0; i < 600; ++i) {
    const auto arch = testutil::random_rule_valid(vocab, rng, 6);
    const ref::Outcome o = ref::run(arch, {28, 28, 1, false});
    const ValidationReport r = validate_architecture(arch, kMnist);
    REQUIRE(r.valid == o.ok);
    if (o.ok) {
      ++valid;
      CHECK(*r.parameter_count == o.params);
      CHECK(r.final_shape->c == o.shape.c);
    } else {
      CHECK(*r.failing_index == o.fail_at);
    }
  }
  CHECK(valid > 100);
}

TEST_CASE("same padding with stride one is a spatial identity") {
  for (std::int64_t in : {1, 5, 28, 31}) {
    const TensorShape s{in, in, 3, false};
    CHECK(infer_layer_shape(conv(8, 5, 1, Padding::Same), s) == TensorShape{in, in, 8, false});
    CHECK(infer_layer_shape(LayerSpec::pool(LayerKind::MaxPool2D, 3, 1, Padding::Same), s) == s);
  }
}

TEST_CASE("shape strings") {
  CHECK(parse_shape("32x32x3") == TensorShape{32, 32, 3, false});
  CHECK_THROWS_AS(parse_shape("32x32"), ParseError);
  CHECK_THROWS_AS(parse_shape("0x3x3"), ParseError);
  CHECK(to_string(TensorShape{13, 13, 16, false}) == "(13,13,16)");
}

}  // TEST_SUITE

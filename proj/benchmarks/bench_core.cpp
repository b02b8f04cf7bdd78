#include <benchmark/benchmark.h>

#include <random>

#include "dqnas/constraints.hpp"
#include "dqnas/neural_core.hpp"
#include "dqnas/qcontroller.hpp"
#include "dqnas/shape_engine.hpp"

using namespace dqnas;

namespace {

const ActionVocabulary& vocab() {
  static const ActionVocabulary v = build_vocabulary(VocabularyConfig{});
  return v;
}

std::vector<LayerSpec> row1() {
  return architecture_from_json(nlohmann::json::parse(R"([
    ["conv2dtranspose", 160, 7, 2, "valid", "HeNormal", "RandomUniform", "l1_l2"],
    ["conv2dtranspose", 128, 9, 2, "valid", "HeNormal", "RandomUniform", "l1"],
    ["separableconv2d", 96, 3, 3, "same", "HeNormal", "HeNormal", "l2"],
    ["conv2dtranspose", 192, 3, 3, "same", "HeNormal", "RandomUniform", "l1"],
    ["conv2d", 96, 5, 3, "valid", "RandomUniform", "HeNormal", "l2"],
    ["conv2d", 128, 5, 2, "same", "HeNormal", "HeNormal", "l1_l2"],
    ["Flatten"],
    ["output", 10, "softmax"]])"));
}

void BM_ShapeInference(benchmark::State& state) {
  const auto arch = row1();
  const TensorShape in{28, 28, 1, false};
  for (auto _ : state) benchmark::DoNotOptimize(validate_architecture(arch, in));
}
BENCHMARK(BM_ShapeInference);

void BM_AllowedMask(benchmark::State& state) {
  PrefixState st;
  st = st.advance(LayerKind::Conv2D).advance(LayerKind::MaxPool2D);
  for (auto _ : state) benchmark::DoNotOptimize(allowed_next_mask(vocab(), st));
}
BENCHMARK(BM_AllowedMask);

nn::Tensor state_for(std::size_t steps) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  nn::Tensor s({steps, 8});
  for (double& x : s.data()) x = u(rng);
  return s;
}

void BM_Forward(benchmark::State& state) {
  const auto p = nn::QNetParams::uniform(nn::QNetShape{8, 100, vocab().size(), 0.3}, 1);
  const nn::Tensor s = state_for(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(nn::qnet_forward(p, s, false));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(8);

void BM_TrainStep(benchmark::State& state) {
  auto p = nn::QNetParams::uniform(nn::QNetShape{8, 100, vocab().size(), 0.3}, 1);
  nn::AdamState opt(p.size());
  std::vector<nn::TrainSample> batch;
  for (int i = 0; i < state.range(0); ++i) batch.push_back({state_for(1), static_cast<std::size_t>(i * 37), 0.5});
  for (auto _ : state) nn::qnet_train_step(p, batch, opt);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(16);

}  // namespace
BENCHMARK_MAIN();

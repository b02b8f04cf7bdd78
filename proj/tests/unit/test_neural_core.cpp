#include <doctest.h>

#include <cmath>
#include <limits>

#include "dqnas/error.hpp"
#include "dqnas/neural_core.hpp"

using namespace dqnas;
using namespace dqnas::nn;

namespace {

Tensor random_state(std::size_t t, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor s(t == 1 ? std::vector<std::size_t>{1, w} : std::vector<std::size_t>{t, w});
  for (double& x : s.data()) x = u(rng);
  return s;
}

}  // namespace

TEST_SUITE("neural_core") {

TEST_CASE("recurrent layer parameter counts for width 7, hidden 100") {
  const QNetParams p(QNetShape{7, 100, 27863, 0.3});
  const auto counts = p.layer_parameter_counts();
  CHECK(counts[0] == 43200);
  CHECK(counts[1] == 80400);
  CHECK(counts[2] == 100 * 27863 + 27863);
  CHECK(p.size() == counts[0] + counts[1] + counts[2]);
}

TEST_CASE("uniform initialisation stays in range and is seeded") {
  const QNetShape shape{8, 16, 40, 0.3};
  const QNetParams a = QNetParams::uniform(shape, 5);
  const QNetParams b = QNetParams::uniform(shape, 5);
  const QNetParams c = QNetParams::uniform(shape, 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (double x : a.values()) REQUIRE(std::abs(x) <= 0.08);
}

TEST_CASE("zero weights give zero Q-values") {
  const QNetParams p(QNetShape{8, 16, 40, 0.3});
  const Tensor q = qnet_forward(p, random_state(1, 8, 1), false);
  REQUIRE(q.size() == 40);
  for (double x : q.data()) CHECK(x == 0.0);
}

TEST_CASE("inference is deterministic and dropout only acts in training") {
  const QNetParams p = QNetParams::uniform(QNetShape{8, 16, 40, 0.5}, 2);
  const Tensor s = random_state(1, 8, 3);
  CHECK(qnet_forward(p, s, false) == qnet_forward(p, s, false));
  Rng r1(9), r2(9);
  CHECK(qnet_forward(p, s, true, &r1) == qnet_forward(p, s, true, &r2));
  Rng r3(9);
  CHECK_FALSE(qnet_forward(p, s, true, &r3) == qnet_forward(p, s, false));
}

TEST_CASE("state width must match") {
  const QNetParams p = QNetParams::uniform(QNetShape{8, 16, 40, 0.3}, 2);
  CHECK_THROWS_AS(qnet_forward(p, random_state(1, 7, 0), false), DimensionMismatch);
}

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const QNetParams p = QNetParams::uniform(QNetShape{8, 16, 40, 0.3}, seed, 0.5);
    const TrainSample sample{random_state(seed % 2 == 0 ? 1 : 3, 8, seed + 100), seed * 7 % 40, 0.7};
    const GradientCheckResult r = gradient_check(p, sample, 128, seed);
    CHECK(r.checked >= 100);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("loss is zero when targets equal the current Q-values") {
  const QNetParams p = QNetParams::uniform(QNetShape{8, 16, 40, 0.3}, 4);
  const Tensor s = random_state(1, 8, 5);
  const double q = qnet_forward(p, s, false)[3];
  const std::vector<TrainSample> batch{{s, 3, q}};
  std::vector<double> grad;
  // The batched forward pass and the per-action loss path sum in different orders.
  CHECK(qnet_loss_and_gradient(p, batch, grad) < 1e-28);
  for (double g : grad) REQUIRE(std::abs(g) < 1e-12);
}

TEST_CASE("repeated steps on one sample reduce the loss") {
  QNetParams p = QNetParams::uniform(QNetShape{8, 16, 40, 0.3}, 4);
  AdamState opt(p.size(), 1e-2);
  const std::vector<TrainSample> batch{{random_state(1, 8, 6), 11, 0.9}};
  const double start = qnet_loss(p, batch);
  qnet_train_step(p, batch, opt);
  CHECK(qnet_loss(p, batch) < start);
  for (int i = 1; i < 50; ++i) qnet_train_step(p, batch, opt);
  CHECK(qnet_loss(p, batch) < 0.1 * start);
  CHECK(opt.step == 50);
}

TEST_CASE("a NaN target aborts the step untouched") {
  QNetParams p = QNetParams::uniform(QNetShape{8, 16, 40, 0.3}, 4);
  const QNetParams before = p;
  AdamState opt(p.size());
  const AdamState opt_before = opt;
  const std::vector<TrainSample> batch{{random_state(1, 8, 6), 1, 0.5},
                                       {random_state(1, 8, 7), 2, std::numeric_limits<double>::quiet_NaN()}};
  CHECK_THROWS_AS(qnet_train_step(p, batch, opt), NonFiniteLoss);
  CHECK(p == before);
  CHECK(opt == opt_before);
}

TEST_CASE("adam update matches the closed form for one step") {
  std::vector<double> params{1.0, -2.0};
  const std::vector<double> grad{0.5, -0.25};
  AdamState opt(2, 0.1);
  adam_update(params, grad, opt);
  // First step: m_hat = g, v_hat = g^2, so the update is lr * g / (|g| + eps).
  CHECK(params[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(params[1] == doctest::Approx(-2.0 + 0.1 * 0.25 / (0.25 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("serialisation round-trips bit for bit") {
  const QNetParams p = QNetParams::uniform(QNetShape{8, 16, 40, 0.3}, 8);
  const Blob b = p.serialize();
  const QNetParams q = QNetParams::deserialize(b);
  CHECK(q == p);
  const Tensor s = random_state(1, 8, 1);
  CHECK(qnet_forward(p, s, false) == qnet_forward(q, s, false));
  Blob cut(b.begin(), b.end() - 3);
  CHECK_THROWS(QNetParams::deserialize(cut));
}

}  // TEST_SUITE

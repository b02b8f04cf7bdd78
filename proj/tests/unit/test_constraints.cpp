#include <doctest.h>

#include <algorithm>

#include "dqnas/constraints.hpp"
#include "test_util.hpp"

using namespace dqnas;
using testutil::conv;

namespace {

std::vector<Rule> rules_of(const std::vector<RuleViolation>& v) {
  std::vector<Rule> out;
  for (const auto& x : v) out.push_back(x.rule);
  return out;
}

std::vector<LayerSpec> complete(std::vector<LayerSpec> t) {
  const bool has_flatten = std::any_of(t.begin(), t.end(), [](const LayerSpec& s) {
    return s.kind == LayerKind::Flatten;
  });
  if (!has_flatten) t.push_back(LayerSpec::flatten());
  t.push_back(output_layer_for(10));
  return t;
}

const LayerSpec kPool = LayerSpec::pool(LayerKind::MaxPool2D, 2, 2, Padding::Valid);

}  // namespace

TEST_SUITE("constraints") {

TEST_CASE("the empty prefix allows convolutions only") {
  const ActionVocabulary v = build_vocabulary(VocabularyConfig{});
  const ActionMask m = allowed_next_mask(v, PrefixState{});
  for (std::size_t i = 0; i < v.size(); ++i) {
    REQUIRE(static_cast<bool>(m[i]) == is_conv(v.decode(i).kind));
  }
}

TEST_CASE("after Flatten no convolution or pooling") {
  const ActionVocabulary v = build_vocabulary(VocabularyConfig{});
  const PrefixState st = PrefixState{}.advance(LayerKind::Conv2D).advance(LayerKind::Flatten);
  const ActionMask m = allowed_next_mask(v, st);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const LayerKind k = v.decode(i).kind;
    if (is_conv(k) || is_pool(k) || k == LayerKind::Flatten) REQUIRE(m[i] == 0);
  }
  CHECK(m[v.range(LayerKind::Terminate).begin] == 1);
  CHECK(m[v.range(LayerKind::Dense).begin] == 1);
}

TEST_CASE("Dropout only right after pooling") {
  const ActionVocabulary v = build_vocabulary(VocabularyConfig{});
  const IndexRange dr = v.range(LayerKind::Dropout);
  const PrefixState after_conv = PrefixState{}.advance(LayerKind::Conv2D);
  const PrefixState after_pool = after_conv.advance(LayerKind::AvgPool2D);
  const ActionMask a = allowed_next_mask(v, after_conv);
  const ActionMask b = allowed_next_mask(v, after_pool);
  for (std::size_t i = dr.begin; i < dr.end; ++i) {
    CHECK(a[i] == 0);
    CHECK(b[i] == 1);
  }
  CHECK(allowed_next_mask(v, after_pool.advance(LayerKind::Dropout))[dr.begin] == 0);
}

TEST_CASE("nothing follows Terminate") {
  const ActionVocabulary v = build_vocabulary(testutil::tiny_vocabulary());
  const PrefixState st =
      PrefixState{}.advance(LayerKind::Conv2D).advance(LayerKind::Flatten).advance(LayerKind::Terminate);
  const ActionMask m = allowed_next_mask(v, st);
  CHECK(std::count(m.begin(), m.end(), 1) == 0);
  CHECK(st.depth == 2);
}

TEST_CASE("whole-sequence examples") {
  const std::vector<LayerSpec> dense_first{conv(16, 3, 2, Padding::Same), LayerSpec::dense(8, Activation::Relu),
                                           LayerSpec::flatten(), output_layer_for(10)};
  const auto v1 = check_sequence(dense_first, 10);
  REQUIRE(v1.size() == 1);
  CHECK(v1[0].rule == Rule::R5);
  CHECK(v1[0].position == 1);

  const std::vector<LayerSpec> good{conv(16, 3, 2, Padding::Same), kPool, LayerSpec::dropout(0.3),
                                    LayerSpec::flatten(), output_layer_for(10)};
  CHECK(check_sequence(good, 10).empty());

  const std::vector<LayerSpec> pool_first{kPool, LayerSpec::flatten(), output_layer_for(10)};
  const auto v3 = check_sequence(pool_first, 10);
  REQUIRE_FALSE(v3.empty());
  CHECK(v3[0].rule == Rule::R1);
  CHECK(v3[0].position == 0);
}

TEST_CASE("output activation depends on the class count") {
  const std::vector<LayerSpec> binary{conv(16, 3, 2, Padding::Same), LayerSpec::flatten(), output_layer_for(2)};
  CHECK(check_sequence(binary, 2).empty());
  CHECK(output_layer_for(2).activation == Activation::Sigmoid);
  CHECK(rules_of(check_sequence(binary, 10)) == std::vector<Rule>{Rule::R3, Rule::R3});
}

TEST_CASE("violations come back in position order") {
  const std::vector<LayerSpec> bad{kPool, LayerSpec::dense(8, Activation::Relu), LayerSpec::flatten(),
                                   conv(16, 3, 2, Padding::Same), LayerSpec::flatten()};
  const auto v = check_sequence(bad, 10);
  CHECK(std::is_sorted(v.begin(), v.end(),
                       [](const RuleViolation& a, const RuleViolation& b) { return a.position < b.position; }));
  const auto r = rules_of(v);
  CHECK(std::count(r.begin(), r.end(), Rule::R2) == 1);
  CHECK(std::count(r.begin(), r.end(), Rule::R6) == 1);
  CHECK(std::count(r.begin(), r.end(), Rule::R3) == 1);
}

TEST_CASE("incremental mask agrees with whole-sequence checking") {
  const ActionVocabulary v = build_vocabulary(testutil::tiny_vocabulary());
  REQUIRE(v.size() <= 50);
  const std::size_t n = v.size();
  std::size_t reachable = 0, checked = 0;

  std::vector<std::size_t> seq;
  auto visit = [&](auto&& self, std::size_t len) -> void {
    if (len == 0) {
      PrefixState st;
      st.max_depth = 4;
      bool ok = true;
      std::vector<LayerSpec> layers;
      for (std::size_t a : seq) {
        if (!allowed_next_mask(v, st)[a]) {
          ok = false;
          break;
        }
        st = st.advance(v.decode(a).kind);
      }
      for (std::size_t a : seq) layers.push_back(v.decode(a));
      const bool valid = check_sequence(complete(layers), 10).empty();
      REQUIRE(ok == valid);
      reachable += ok;
      ++checked;
      return;
    }
    for (std::size_t a = 0; a < n; ++a) {
      seq.push_back(a);
      self(self, len - 1);
      seq.pop_back();
    }
  };
  for (std::size_t len = 1; len <= 4; ++len) visit(visit, len);
  CHECK(checked == n + n * n + n * n * n + n * n * n * n);
  CHECK(reachable > 0);
}

TEST_CASE("every reachable state below the cap has an allowed action") {
  const ActionVocabulary v = build_vocabulary(testutil::tiny_vocabulary());
  std::vector<PrefixState> frontier{PrefixState{}};
  frontier[0].max_depth = 5;
  while (!frontier.empty()) {
    const PrefixState st = frontier.back();
    frontier.pop_back();
    if (st.terminated || st.depth >= st.max_depth) continue;
    const ActionMask m = allowed_next_mask(v, st);
    REQUIRE(std::count(m.begin(), m.end(), 1) > 0);
    for (LayerKind k : kAllLayerKinds) {
      if (kind_allowed(st, k) && !v.range(k).empty()) frontier.push_back(st.advance(k));
    }
  }
}

TEST_CASE("prefix state json round-trip") {
  PrefixState st = PrefixState{}.advance(LayerKind::Conv2D).advance(LayerKind::MaxPool2D);
  st.max_depth = 6;
  const nlohmann::json j = st;
  CHECK(j.get<PrefixState>() == st);
  CHECK(nlohmann::json(PrefixState{}).get<PrefixState>() == PrefixState{});
}

}  // TEST_SUITE

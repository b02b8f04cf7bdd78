// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dqnas/constraints.hpp"
#include "dqnas/neural_core.hpp"
#include "dqnas/qcontroller.hpp"
#include "dqnas/search_loop.hpp"
#include "dqnas/shape_engine.hpp"
#include "dqnas/weight_store.hpp"
#include "reference_shapes.hpp"
#include "test_util.hpp"

using namespace dqnas;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Detail {
 public:
  template <class T>
  Detail& operator<<(const T& v) {
    ss_ << v;
    return *this;
  }
  std::string str() const { return ss_.str(); }

 private:
  std::ostringstream ss_;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<LayerSpec> complete(std::vector<LayerSpec> t) {
  if (std::none_of(t.begin(), t.end(), [](const LayerSpec& s) { return s.kind == LayerKind::Flatten; })) {
    t.push_back(LayerSpec::flatten());
  }
  t.push_back(output_layer_for(10));
  return t;
}

nn::QNetParams bias_only(std::size_t actions, const std::vector<double>& bias) {
  nn::QNetParams p(nn::QNetShape{8, 4, actions, 0.3});
  const nn::BlockLayout& b = p.layout(nn::Block::OutputBias);
  std::copy(bias.begin(), bias.end(), p.values().begin() + static_cast<std::ptrdiff_t>(b.offset));
  return p;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  const std::vector<nn::QNetShape> shapes{{8, 16, 40, 0.3}, {7, 24, 120, 0.3}};
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const nn::QNetShape& shape = shapes[seed % shapes.size()];
    const nn::QNetParams p = nn::QNetParams::uniform(shape, seed, 0.5);
    nn::Rng rng(seed + 1000);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t steps = seed % 3 == 0 ? 1 : 3;
    nn::Tensor state({steps, shape.input_width});
    for (double& x : state.data()) x = u(rng);
    const nn::TrainSample sample{state, (seed * 7) % shape.output_width, u(rng) * 2.0 - 1.0};
    const nn::GradientCheckResult r = nn::gradient_check(p, sample, 128, seed);
    worst = std::max(worst, r.max_relative_error);
    checked += r.checked;
  }
  const double t = seconds_since(t0);
  Detail d;
  d << "12 nets, " << checked << " coordinates, max rel err " << worst << " (< 1e-4), " << t << " s (< 30 s)";
  return {worst < 1e-4 && t < 30.0, d.str()};
}

Outcome recurrent_counts() {
  const nn::QNetParams p(nn::QNetShape{7, 100, build_vocabulary(VocabularyConfig{}).size(), 0.3});
  const auto c = p.layer_parameter_counts();
  Detail d;
  d << "LSTM-1 " << c[0] << " (43200), LSTM-2 " << c[1] << " (80400)";
  return {c[0] == 43200 && c[1] == 80400, d.str()};
}

Outcome shape_oracle() {
  const ActionVocabulary vocab = build_vocabulary(VocabularyConfig{});
  const TensorShape mnist{28, 28, 1, false};
  std::mt19937_64 rng(2024);
  std::size_t valid = 0, drawn = 0, mismatches = 0;
  while (valid < 1000 && drawn < 200000) {
    ++drawn;
    const auto arch = testutil::random_rule_valid(vocab, rng, 8);
    const ref::Outcome o = ref::run(arch, {28, 28, 1, false});
    const ValidationReport r = validate_architecture(arch, mnist);
    if (r.valid != o.ok) {
      ++mismatches;
      continue;
    }
    if (!o.ok) {
      mismatches += *r.failing_index != o.fail_at;
      continue;
    }
    ++valid;
    mismatches += *r.parameter_count != o.params;
    // Every intermediate shape, not just the last one.
    TensorShape s = mnist;
    for (std::size_t i = 0; i < arch.size(); ++i) {
      s = infer_layer_shape(arch[i], s);
      const ref::Shape& t = o.trace[i];
      const bool same = s.c == t.c && s.flattened == t.flat && (s.flattened || (s.h == t.h && s.w == t.w));
      mismatches += !same;
    }
  }
  const std::vector<LayerSpec> small{testutil::conv(16, 7, 1, Padding::Valid), LayerSpec::flatten(),
                                     output_layer_for(10)};
  const ValidationReport k7 = validate_architecture(small, TensorShape{5, 5, 1, false});
  const bool rejected = !k7.valid && k7.failing_index == 0u && k7.reason == FailureReason::KernelExceedsInput;
  Detail d;
  d << valid << " valid of " << drawn << " drawn, " << mismatches << " mismatches; 5x5 input with 7x7 kernel "
    << (rejected ? "rejected" : "accepted");
  return {valid >= 1000 && mismatches == 0 && rejected, d.str()};
}

Outcome constraint_equivalence() {
  const ActionVocabulary v = build_vocabulary(testutil::tiny_vocabulary());
  const std::size_t n = v.size();
  std::size_t checked = 0, reachable = 0, disagreements = 0;
  std::vector<std::size_t> seq;
  std::function<void(std::size_t)> visit = [&](std::size_t len) {
    if (len == 0) {
      PrefixState st;
      st.max_depth = 4;
      bool ok = true;
      std::vector<LayerSpec> layers;
      for (std::size_t a : seq) {
        if (ok && !allowed_next_mask(v, st)[a]) ok = false;
        if (ok) st = st.advance(v.decode(a).kind);
        layers.push_back(v.decode(a));
      }
      disagreements += ok != check_sequence(complete(layers), 10).empty();
      reachable += ok;
      ++checked;
      return;
    }
    for (std::size_t a = 0; a < n; ++a) {
      seq.push_back(a);
      visit(len - 1);
      seq.pop_back();
    }
  };
  for (std::size_t len = 1; len <= 4; ++len) visit(len);
  Detail d;
  d << n << "-token vocabulary, " << checked << " sequences (length <= 4), " << reachable << " reachable, "
    << disagreements << " disagreements";
  return {n <= 50 && disagreements == 0 && reachable > 0, d.str()};
}

Outcome bellman_epsilon_sync() {
  std::vector<std::string> failures;
  const nn::Tensor state({1, 8}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});

  // r + gamma * max Q_T over allowed actions, computed by hand.
  const nn::QNetParams target = bias_only(4, {0.5, 0.2, -1.0, 0.1});
  const BellmanConfig cfg{0.9, 5, false};
  if (std::abs(bellman_target(0.8, cfg, target, state, ActionMask{1, 1, 1, 1}) - 1.25) > 1e-12) {
    failures.push_back("target 1.25");
  }
  if (std::abs(bellman_target(0.8, cfg, target, state, ActionMask{0, 1, 1, 1}) - 0.98) > 1e-12) {
    failures.push_back("masked target 0.98");
  }
  if (bellman_target(-10.0, cfg, target, std::nullopt, ActionMask{1, 1, 1, 1}) != -10.0) {
    failures.push_back("terminal target");
  }
  const nn::QNetParams main = bias_only(4, {0.0, 3.0, 0.0, 0.0});
  if (std::abs(bellman_target(0.8, BellmanConfig{0.9, 5, true}, target, state, ActionMask{1, 1, 1, 1}, &main) -
               (0.8 + 0.9 * 0.2)) > 1e-12) {
    failures.push_back("canonical target");
  }

  PolicyConfig pol;
  for (int k = 0; k <= 40; ++k) {
    if (pol.current_epsilon() != std::max(pol.epsilon_min, 1.0 - 0.05 * k)) {
      failures.push_back("epsilon at k=" + std::to_string(k));
      break;
    }
    pol = decay_epsilon(pol, true);
  }

  SearchConfig sc = testutil::small_search(11);
  sc.controller_epochs = 7;
  sc.bellman.sync_period = 3;
  SearchEngine engine(sc);
  if (!(engine.controller().target == engine.controller().main)) failures.push_back("initial target");
  nn::QNetParams frozen = engine.controller().target;
  for (std::size_t e = 1; e <= sc.controller_epochs; ++e) {
    engine.run_epoch();
    if (e % 3 == 0) {
      if (!(engine.controller().target == engine.controller().main)) failures.push_back("sync at " + std::to_string(e));
      frozen = engine.controller().target;
    } else if (!(engine.controller().target == frozen)) {
      failures.push_back("target moved at epoch " + std::to_string(e));
    }
  }
  Detail d;
  if (failures.empty()) {
    d << "targets within 1e-12, epsilon exact for k = 0..40, sync every 3 of 7 epochs bitwise";
  } else {
    for (const auto& f : failures) d << f << "; ";
  }
  return {failures.empty(), d.str()};
}

class CountingEvaluator : public Evaluator {
 public:
  explicit CountingEvaluator(std::size_t* calls) : calls_(calls) {}
  EvaluationResult evaluate(const EvaluationRequest& req) override {
    ++*calls_;
    return inner_.evaluate(req);
  }
  std::string name() const override { return "counting"; }

 private:
  std::size_t* calls_;
  SurrogateEvaluator inner_;
};

Outcome sentinel() {
  SearchConfig cfg = testutil::small_search(5);
  std::size_t calls = 0;
  SearchEngine engine(cfg, [&calls] { return std::make_unique<CountingEvaluator>(&calls); });
  const std::vector<std::vector<LayerSpec>> invalid{
      {testutil::conv(16, 9, 3, Padding::Valid), testutil::conv(16, 9, 3, Padding::Valid), LayerSpec::flatten(),
       output_layer_for(10)},
      {testutil::conv(16, 3, 2, Padding::Same), LayerSpec::dropout(0.5), LayerSpec::flatten(), output_layer_for(10)},
      {LayerSpec::flatten(), output_layer_for(10)}};
  engine.set_sequence_source([&](std::size_t i) { return invalid[i % invalid.size()]; });
  const SearchReport r = engine.run();
  const bool all_sentinel = std::all_of(r.models.begin(), r.models.end(), [](const ModelSummary& m) {
    return m.reward == -10.0 && !m.failure.empty();
  });
  const bool recorded = engine.buffer().records().size() == r.models.size();
  Detail d;
  d << r.models.size() << " invalid models, rewards all -10.0: " << (all_sentinel ? "yes" : "no")
    << ", recorded: " << (recorded ? "yes" : "no") << ", evaluator calls " << calls << ", store writes "
    << engine.weight_store().write_count();
  return {all_sentinel && recorded && calls == 0 && engine.weight_store().write_count() == 0, d.str()};
}

Outcome one_shot_cache() {
  SearchConfig cfg = testutil::small_search(6);
  cfg.controller_epochs = 1;
  cfg.models_per_epoch = 2;
  SearchEngine engine(cfg);
  const auto row = testutil::mnist_row1();
  engine.set_sequence_source([&](std::size_t) { return row; });
  const SearchReport r = engine.run();
  const bool full = r.models.size() == 2 && r.models[0].cache_hit_prefix_len == 0 &&
                    r.models[1].cache_hit_prefix_len == row.size();

  const std::vector<LayerSpec> tokens{testutil::conv(16, 3, 2, Padding::Same), testutil::conv(32, 3, 2, Padding::Same),
                                      LayerSpec::pool(LayerKind::MaxPool2D, 2, 2, Padding::Valid),
                                      LayerSpec::batch_norm()};
  std::mt19937_64 rng(99);
  auto random_arch = [&] {
    std::vector<LayerSpec> a(std::uniform_int_distribution<std::size_t>(1, 5)(rng));
    for (auto& l : a) l = tokens[std::uniform_int_distribution<std::size_t>(0, tokens.size() - 1)(rng)];
    return a;
  };
  struct Entry {
    std::vector<LayerSpec> path;
    std::vector<Blob> blobs;
    double reward;
    int time;
  };
  std::size_t mismatches = 0, queries = 0;
  for (int state = 0; state < 200; ++state) {
    WeightStore store;
    std::vector<Entry> model;
    const int inserts = std::uniform_int_distribution<int>(0, 12)(rng);
    for (int t = 0; t < inserts; ++t) {
      const auto a = random_arch();
      const double reward = std::uniform_int_distribution<int>(0, 4)(rng) / 4.0;
      std::vector<Blob> blobs;
      for (std::size_t i = 0; i < a.size(); ++i) blobs.push_back(Blob{static_cast<std::uint8_t>(t), static_cast<std::uint8_t>(i)});
      store.store_prefix_weights(a, blobs, reward);
      auto it = std::find_if(model.begin(), model.end(), [&](const Entry& e) { return e.path == a; });
      if (it != model.end()) model.erase(it);
      model.push_back({a, blobs, reward, t});
    }
    for (int q = 0; q < 5; ++q, ++queries) {
      const auto query = random_arch();
      std::size_t best_len = 0;
      const Entry* best = nullptr;
      for (const Entry& e : model) {
        std::size_t l = 0;
        while (l < e.path.size() && l < query.size() && e.path[l] == query[l]) ++l;
        if (l == 0) continue;
        if (best == nullptr || l > best_len ||
            (l == best_len && (e.reward > best->reward || (e.reward == best->reward && e.time > best->time)))) {
          best_len = l;
          best = &e;
        }
      }
      const PrefixMatch m = store.longest_prefix_match(query);
      const std::vector<Blob> expect =
          best ? std::vector<Blob>(best->blobs.begin(), best->blobs.begin() + best_len) : std::vector<Blob>{};
      mismatches += m.match_len != best_len || m.blobs != expect;
    }
  }
  Detail d;
  d << "repeat of row-1 architecture matched " << (r.models.size() == 2 ? r.models[1].cache_hit_prefix_len : 0)
    << "/" << row.size() << " layers; " << queries << " brute-force queries over 200 stores, " << mismatches
    << " mismatches";
  return {full && mismatches == 0, d.str()};
}

Outcome search_uplift() {
  int ge = 0, gt = 0;
  double slowest = 0.0;
  Detail d;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SearchConfig cfg;
    cfg.seed = seed;
    auto t0 = Clock::now();
    const double dq = run_search(cfg).top_k_mean(5);
    slowest = std::max(slowest, seconds_since(t0));

    SearchConfig rnd = cfg;
    rnd.policy.epsilon = 1.0;
    rnd.policy.epsilon_min = 1.0;
    t0 = Clock::now();
    const double rb = run_search(rnd).top_k_mean(5);
    slowest = std::max(slowest, seconds_since(t0));

    ge += dq >= rb;
    gt += dq > rb;
    d << "seed " << seed << " " << dq << " vs " << rb << "; ";
  }
  d << ">= in " << ge << "/5 (need 5), > in " << gt << "/5 (need 4), slowest run " << slowest << " s (< 300 s)";
  return {ge == 5 && gt >= 4 && slowest < 300.0, d.str()};
}

Outcome checkpoint_determinism() {
  SearchConfig cfg;
  cfg.seed = 3;
  cfg.models_per_epoch = 12;
  cfg.controller_epochs = 5;
  const std::string full = run_search(cfg).to_json(cfg.report_top_k, false).dump(2);

  testutil::TempDir dir("acceptance-ckpt");
  {
    // Interrupted after epoch 3: the stop flag is raised once that epoch is saved.
    std::atomic<bool> stop{false};
    SearchEngine engine(cfg);
    for (int e = 0; e < 3; ++e) engine.run_epoch();
    engine.save_checkpoint(dir.path());
    stop = true;
    engine.run(&stop, dir.path());
  }
  SearchEngine resumed = SearchEngine::load_checkpoint(dir.path());
  const std::size_t at = resumed.epoch();
  const std::string again = resumed.run().to_json(cfg.report_top_k, false).dump(2);
  Detail d;
  d << "resumed at epoch " << at << " of 5, report " << again.size() << " bytes, "
    << (again == full ? "identical" : "different") << " to the uninterrupted run";
  return {at == 3 && again == full, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  // An optional argument runs only the criteria whose name contains it.
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"recurrent parameter counts", recurrent_counts},
      {"shape oracle equivalence", shape_oracle},
      {"constraint equivalence", constraint_equivalence},
      {"bellman/epsilon/sync exactness", bellman_epsilon_sync},
      {"sentinel handling", sentinel},
      {"one-shot cache", one_shot_cache},
      {"search uplift (surrogate)", search_uplift},
      {"checkpoint determinism", checkpoint_determinism},
  };
  int failed = 0;
  std::size_t ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (name.find(filter) == std::string::npos) continue;
    ++ran;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(ran) - failed, ran);
  return failed == 0 ? 0 : 1;
}

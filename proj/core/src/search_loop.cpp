#include "dqnas/search_loop.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "dqnas/error.hpp"
#include "dqnas/shape_engine.hpp"
#include "dqnas/worker_session.hpp"
#include "io_util.hpp"

namespace dqnas {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

// ---------------------------------------------------------------------------
// Report

std::vector<std::size_t> SearchReport::ranking() const {
  std::vector<std::size_t> idx(models.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return models[a].reward > models[b].reward; });
  return idx;
}

std::optional<std::size_t> SearchReport::best() const {
  if (models.empty()) return std::nullopt;
  return ranking().front();
}

double SearchReport::top_k_mean(std::size_t k) const {
  const auto r = ranking();
  const std::size_t n = std::min(k, r.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += models[r[i]].reward;
  return sum / static_cast<double>(n);
}

namespace {

json model_json(const ModelSummary& m, bool timing) {
  json j{{"index", m.index},
         {"epoch", m.epoch},
         {"actions", m.actions},
         {"architecture", architecture_to_json(m.architecture)},
         {"reward", m.reward},
         {"epsilon", m.epsilon},
         {"cache_hit_prefix_len", m.cache_hit_prefix_len},
         {"parameter_count", m.parameter_count},
         {"failure", m.failure}};
  if (timing) j["wall_time_s"] = m.wall_time_s;
  return j;
}

ModelSummary model_from(const json& j) {
  ModelSummary m;
  m.index = j.at("index").get<std::size_t>();
  m.epoch = j.at("epoch").get<std::size_t>();
  m.actions = j.at("actions").get<std::vector<std::size_t>>();
  m.architecture = architecture_from_json(j.at("architecture"));
  m.reward = j.at("reward").get<double>();
  m.epsilon = j.at("epsilon").get<double>();
  m.cache_hit_prefix_len = j.at("cache_hit_prefix_len").get<std::size_t>();
  m.parameter_count = j.at("parameter_count").get<std::int64_t>();
  m.failure = j.at("failure").get<std::string>();
  m.wall_time_s = j.value("wall_time_s", 0.0);
  return m;
}

json epoch_json(const EpochSummary& e, bool timing) {
  json j{{"epoch", e.epoch},
         {"mean_reward", e.mean_reward},
         {"max_reward", e.max_reward},
         {"epsilon", e.epsilon},
         {"controller_loss", e.controller_loss},
         {"mean_cache_hit", e.mean_cache_hit},
         {"max_cache_hit", e.max_cache_hit},
         {"invalid_models", e.invalid_models},
         {"target_synced", e.target_synced}};
  if (timing) j["wall_time_s"] = e.wall_time_s;
  return j;
}

EpochSummary epoch_from(const json& j) {
  EpochSummary e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.mean_reward = j.at("mean_reward").get<double>();
  e.max_reward = j.at("max_reward").get<double>();
  e.epsilon = j.at("epsilon").get<double>();
  e.controller_loss = j.at("controller_loss").get<double>();
  e.mean_cache_hit = j.at("mean_cache_hit").get<double>();
  e.max_cache_hit = j.at("max_cache_hit").get<std::size_t>();
  e.invalid_models = j.at("invalid_models").get<std::size_t>();
  e.target_synced = j.at("target_synced").get<bool>();
  e.wall_time_s = j.value("wall_time_s", 0.0);
  return e;
}

}  // namespace

json SearchReport::to_json(std::size_t top_k, bool include_timing) const {
  json j;
  j["complete"] = complete;
  j["model_count"] = models.size();
  if (const auto b = best()) {
    j["best"] = {{"index", *b},
                 {"reward", models[*b].reward},
                 {"architecture", architecture_to_json(models[*b].architecture)}};
  } else {
    j["best"] = nullptr;
  }
  json top = json::array();
  const auto r = ranking();
  for (std::size_t i = 0; i < std::min(top_k, r.size()); ++i) {
    const ModelSummary& m = models[r[i]];
    top.push_back({{"rank", i + 1},
                   {"index", m.index},
                   {"reward", m.reward},
                   {"parameter_count", m.parameter_count},
                   {"architecture", architecture_to_json(m.architecture)}});
  }
  j["top"] = std::move(top);
  j["epochs"] = json::array();
  for (const auto& e : epochs) j["epochs"].push_back(epoch_json(e, include_timing));
  j["models"] = json::array();
  for (const auto& m : models) j["models"].push_back(model_json(m, include_timing));
  if (include_timing) j["wall_time_seconds"] = wall_time_seconds;
  return j;
}

SearchReport SearchReport::from_json(const json& j) {
  SearchReport r;
  try {
    r.complete = j.value("complete", false);
    for (const auto& m : j.at("models")) r.models.push_back(model_from(m));
    for (const auto& e : j.at("epochs")) r.epochs.push_back(epoch_from(e));
    r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_metrics_csv(const SearchReport& report, const std::filesystem::path& path) {
  std::string out = "model_index,epoch,sequence,reward,epsilon,cache_hit_prefix_len,wall_time_s\n";
  for (const auto& m : report.models) {
    out += std::to_string(m.index) + "," + std::to_string(m.epoch) + "," +
           csv_quote(architecture_to_string(m.architecture)) + "," + json(m.reward).dump() + "," +
           json(m.epsilon).dump() + "," + std::to_string(m.cache_hit_prefix_len) + "," +
           json(m.wall_time_s).dump() + "\n";
  }
  detail::write_text_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Engine

EvaluatorFactory default_evaluator_factory(const SearchConfig& cfg) {
  if (cfg.evaluator.kind == EvaluatorKind::Surrogate) {
    const TensorShape input = dataset_info(cfg.dataset).input_shape;
    return [input] { return std::make_unique<SurrogateEvaluator>(input); };
  }
  const auto timeout = std::chrono::milliseconds(
      static_cast<std::int64_t>(cfg.evaluator.timeout_seconds * 1000.0));
  return [cmd = cfg.evaluator.command, timeout, attempts = cfg.evaluator.max_start_attempts] {
    return std::make_unique<ExternalEvaluator>(cmd, timeout, attempts);
  };
}

struct SearchEngine::Pending {
  std::size_t index = 0;
  GeneratedSequence gen;
  double epsilon = 0.0;
  ValidationReport shape;
  std::string failure;
  PrefixMatch match;
  std::optional<EvaluationResult> result;
  std::exception_ptr error;
  double reward = kInvalidReward;
  double wall_time_s = 0.0;
};

SearchEngine::SearchEngine(SearchConfig cfg, EvaluatorFactory factory)
    : cfg_(std::move(cfg)), buffer_(cfg_.replay), factory_(std::move(factory)) {
  cfg_.validate();
  vocab_ = std::make_shared<const ActionVocabulary>(cfg_.vocabulary);
  dataset_ = dataset_info(cfg_.dataset);
  output_layer_ = output_layer_for(dataset_.num_classes);
  const nn::QNetShape shape{cfg_.controller.state_width, cfg_.controller.hidden, vocab_->size(),
                            cfg_.controller.dropout};
  cs_ = make_controller(shape, cfg_.policy, cfg_.controller.learning_rate, splitmix64(cfg_.seed ^ 1));
  rng_.seed(splitmix64(cfg_.seed ^ 2));
  train_rng_.seed(splitmix64(cfg_.seed ^ 3));
  if (!factory_) factory_ = default_evaluator_factory(cfg_);
}

SearchEngine::~SearchEngine() = default;
SearchEngine::SearchEngine(SearchEngine&&) noexcept = default;
SearchEngine& SearchEngine::operator=(SearchEngine&&) noexcept = default;

Evaluator& SearchEngine::evaluator(std::size_t slot) {
  if (evaluators_.size() <= slot) evaluators_.resize(slot + 1);
  if (!evaluators_[slot]) evaluators_[slot] = factory_();
  return *evaluators_[slot];
}

GeneratedSequence SearchEngine::generate_sequence() {
  GeneratedSequence g;
  PrefixState st;
  st.max_depth = cfg_.max_layers;
  const std::size_t width = cfg_.controller.state_width;
  const StateEncoding enc = cfg_.controller.state_encoding;

  nn::Tensor state = encode_state(*vocab_, g.architecture, width, enc);
  while (!st.terminated && st.depth < cfg_.max_layers) {
    const ActionMask mask = allowed_next_mask(*vocab_, st);
    const nn::Tensor q = nn::qnet_forward(cs_.main, state, false);
    const ActionChoice choice = select_action(q.data(), mask, cs_.policy, rng_);
    cs_.policy = decay_epsilon(cs_.policy, choice.was_random);

    const LayerSpec& layer = vocab_->decode(choice.index);
    g.actions.push_back(choice.index);
    st = st.advance(layer.kind);
    if (layer.kind != LayerKind::Terminate) g.architecture.push_back(layer);

    Experience e;
    e.state = std::move(state);
    e.action = choice.index;
    e.next_prefix = st;
    state = encode_state(*vocab_, g.architecture, width, enc);
    if (!st.terminated && st.depth < cfg_.max_layers) e.next_state = state;
    g.experiences.push_back(std::move(e));
  }

  if (!st.seen_flatten) g.architecture.push_back(LayerSpec::flatten());
  g.architecture.push_back(output_layer_);
  return g;
}

void SearchEngine::evaluate_wave(std::vector<Pending>& wave) {
  std::vector<Pending*> todo;
  for (auto& p : wave) {
    if (p.failure.empty()) todo.push_back(&p);
  }
  const auto call = [this](Pending& p, Evaluator& ev) {
    const auto t0 = Clock::now();
    try {
      EvaluationRequest req;
      req.id = "model-" + std::to_string(p.index);
      req.architecture = p.gen.architecture;
      req.dataset_id = cfg_.dataset;
      req.combos = cfg_.evaluator.combos;
      req.epochs = cfg_.evaluator.epochs;
      req.batch_size = cfg_.evaluator.batch_size;
      req.validation_split = cfg_.evaluator.validation_split;
      req.seed = cfg_.seed;
      for (std::size_t i = 0; i < p.match.blobs.size(); ++i) {
        if (!p.match.blobs[i].empty()) req.prefix_blobs.push_back({i, p.match.blobs[i]});
      }
      p.result = ev.evaluate(req);
      if (p.result->id != req.id) throw ProtocolError("evaluator answered the wrong request id");
      p.result->check_invariants();
    } catch (...) {
      p.error = std::current_exception();
    }
    p.wall_time_s = seconds_since(t0);
  };

  evaluator_calls_ += todo.size();
  if (todo.size() == 1) {
    call(*todo.front(), evaluator(0));
  } else if (!todo.empty()) {
    for (std::size_t s = 0; s < todo.size(); ++s) evaluator(s);
    std::vector<std::thread> threads;
    for (std::size_t s = 0; s < todo.size(); ++s) {
      threads.emplace_back(call, std::ref(*todo[s]), std::ref(*evaluators_[s]));
    }
    for (auto& t : threads) t.join();
  }

  for (Pending* p : todo) {
    if (!p->error) continue;
    try {
      std::rethrow_exception(p->error);
    } catch (const EvaluatorUnavailable&) {
      throw;
    } catch (const WorkerCrashed&) {
      p->failure = "worker_crashed";
    } catch (const EvaluationTimeout&) {
      p->failure = "timeout";
    } catch (const WorkerReportedError&) {
      p->failure = "worker_error";
    } catch (const ProtocolError&) {
      p->failure = "protocol_error";
    } catch (const InvalidArchitecture&) {
      p->failure = "invalid_architecture";
    } catch (const Error&) {
      p->failure = "evaluation_error";
    }
    p->result.reset();
  }
}

double SearchEngine::train_controller() {
  if (buffer_.empty()) return 0.0;
  // Replayed sequences share many successor states, and the target network is
  // fixed during this call, so bootstrap values are memoised per (state, prefix).
  std::map<std::vector<std::uint8_t>, ActionMask> mask_cache;
  std::map<std::pair<std::vector<double>, std::vector<std::uint8_t>>, double> bootstrap_cache;
  const auto mask_for = [&](const std::vector<std::uint8_t>& key, const PrefixState& st) -> const ActionMask& {
    auto it = mask_cache.find(key);
    if (it == mask_cache.end()) it = mask_cache.emplace(key, allowed_next_mask(*vocab_, st)).first;
    return it->second;
  };

  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t s = 0; s < cfg_.controller.train_steps; ++s) {
    const std::vector<Experience> batch = buffer_.sample_batch(cfg_.batch_records, rng_);
    if (batch.empty()) continue;
    std::vector<nn::TrainSample> samples;
    samples.reserve(batch.size());
    for (const Experience& e : batch) {
      double target = e.reward;
      if (!e.terminal()) {
        auto prefix_key = json::to_cbor(json(e.next_prefix));
        const std::vector<double> state(e.next_state->data().begin(), e.next_state->data().end());
        auto key = std::make_pair(state, prefix_key);
        auto it = bootstrap_cache.find(key);
        if (it == bootstrap_cache.end()) {
          const double future = bellman_target(0.0, cfg_.bellman, cs_.target, e.next_state,
                                               mask_for(prefix_key, e.next_prefix), &cs_.main);
          it = bootstrap_cache.emplace(std::move(key), future).first;
        }
        target = e.reward + it->second;
      }
      samples.push_back({e.state, e.action, target});
    }
    total += nn::qnet_train_step(cs_.main, samples, cs_.optimizer,
                                 cfg_.controller.train_dropout ? &train_rng_ : nullptr);
    ++steps;
  }
  return steps == 0 ? 0.0 : total / static_cast<double>(steps);
}

void SearchEngine::run_epoch(const std::atomic<bool>* stop) {
  if (finished()) return;
  const auto t0 = Clock::now();
  const TensorShape input = dataset_.input_shape;
  const std::size_t first_index = history_.size();

  // Steps 2-5: sample every sequence of the epoch with the current main network.
  std::vector<Pending> pending(cfg_.models_per_epoch);
  for (std::size_t i = 0; i < pending.size(); ++i) {
    Pending& p = pending[i];
    p.index = first_index + i;
    if (source_) {
      p.gen.architecture = source_(p.index);
    } else {
      p.gen = generate_sequence();
    }
    p.epsilon = cs_.policy.current_epsilon();

    p.shape = validate_architecture(p.gen.architecture, input);
    const auto violations = check_sequence(p.gen.architecture, dataset_.num_classes);
    if (!p.shape.valid) {
      p.failure = "invalid_shape:" + std::string(to_string(*p.shape.reason));
    } else if (!violations.empty()) {
      p.failure = "constraint:" + std::string(to_string(violations.front().rule));
    }
  }

  // Steps 6-10 in waves of pool_size evaluations; writes happen between waves.
  const std::size_t pool = cfg_.evaluator.pool_size;
  for (std::size_t begin = 0; begin < pending.size(); begin += pool) {
    if (stop != nullptr && stop->load()) throw SearchInterrupted("search interrupted");
    const std::size_t end = std::min(pending.size(), begin + pool);
    std::vector<Pending> wave(std::make_move_iterator(pending.begin() + static_cast<std::ptrdiff_t>(begin)),
                              std::make_move_iterator(pending.begin() + static_cast<std::ptrdiff_t>(end)));
    for (auto& p : wave) {
      if (p.failure.empty()) p.match = store_.longest_prefix_match(p.gen.architecture);
    }
    evaluate_wave(wave);

    for (auto& p : wave) {
      if (p.result) {
        p.reward = model_reward(p.result->best_val_accuracy, *p.shape.parameter_count, cfg_.reward);
        std::vector<Blob> blobs(p.gen.architecture.size());
        for (auto& ub : p.result->updated_blobs) {
          if (ub.layer < blobs.size()) blobs[ub.layer] = std::move(ub.blob);
        }
        store_.store_prefix_weights(p.gen.architecture, std::move(blobs), p.reward);
      } else {
        p.reward = kInvalidReward;
      }

      ModelRecord rec;
      rec.sequence = p.gen.actions;
      rec.architecture = p.gen.architecture;
      rec.reward = p.reward;
      rec.insertion_ordinal = p.index;
      rec.experiences = std::move(p.gen.experiences);
      if (!rec.experiences.empty()) rec.experiences.back().reward = p.reward;
      rec.failure = p.failure;
      buffer_.record_model(std::move(rec));

      ModelSummary m;
      m.index = p.index;
      m.epoch = epoch_;
      m.actions = p.gen.actions;
      m.architecture = std::move(p.gen.architecture);
      m.reward = p.reward;
      m.epsilon = p.epsilon;
      m.cache_hit_prefix_len = p.match.match_len;
      m.parameter_count = p.shape.parameter_count.value_or(0);
      m.failure = p.failure;
      m.wall_time_s = p.wall_time_s;
      history_.push_back(std::move(m));
    }
  }

  // Step 11-12: replay training, then the periodic target sync.
  EpochSummary es;
  es.epoch = epoch_;
  es.controller_loss = train_controller();
  if (++cs_.epochs_since_sync >= cfg_.bellman.sync_period) {
    sync_target(cs_);
    es.target_synced = true;
  }

  double sum = 0.0;
  double hits = 0.0;
  es.max_reward = kInvalidReward;
  for (std::size_t i = first_index; i < history_.size(); ++i) {
    const ModelSummary& m = history_[i];
    sum += m.reward;
    hits += static_cast<double>(m.cache_hit_prefix_len);
    es.max_reward = std::max(es.max_reward, m.reward);
    es.max_cache_hit = std::max(es.max_cache_hit, m.cache_hit_prefix_len);
    if (m.reward == kInvalidReward) ++es.invalid_models;
  }
  const auto n = static_cast<double>(history_.size() - first_index);
  es.mean_reward = sum / n;
  es.mean_cache_hit = hits / n;
  es.epsilon = cs_.policy.current_epsilon();
  es.wall_time_s = seconds_since(t0);
  epoch_history_.push_back(es);
  ++epoch_;
}

SearchReport SearchEngine::report() const {
  SearchReport r;
  r.models = history_;
  r.epochs = epoch_history_;
  r.complete = finished();
  for (const auto& e : epoch_history_) r.wall_time_seconds += e.wall_time_s;
  return r;
}

SearchReport SearchEngine::run(const std::atomic<bool>* stop,
                               const std::optional<std::filesystem::path>& checkpoint_dir) {
  if (checkpoint_dir && epoch_ == 0) save_checkpoint(*checkpoint_dir);
  while (!finished()) {
    if (stop != nullptr && stop->load()) break;
    try {
      run_epoch(stop);
    } catch (const SearchInterrupted&) {
      break;  // the last checkpoint stays at the previous epoch boundary
    }
    if (checkpoint_dir) save_checkpoint(*checkpoint_dir);
  }
  return report();
}

SearchReport run_search(const SearchConfig& cfg, EvaluatorFactory factory) {
  SearchEngine engine(cfg, std::move(factory));
  return engine.run();
}

}  // namespace dqnas

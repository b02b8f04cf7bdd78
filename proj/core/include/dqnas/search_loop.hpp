#pragma once

// The search orchestrator: sample architectures from the controller, validate,
// evaluate with one-shot warm starts, record, replay, train, and periodically
// synchronise the target network.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dqnas/constraints.hpp"
#include "dqnas/evaluation.hpp"
#include "dqnas/qcontroller.hpp"
#include "dqnas/replay.hpp"
#include "dqnas/search_config.hpp"
#include "dqnas/search_space.hpp"
#include "dqnas/weight_store.hpp"

namespace dqnas {

struct GeneratedSequence {
  std::vector<std::size_t> actions;      // sampled vocabulary indices, Terminate included
  std::vector<LayerSpec> architecture;   // sampled layers plus the forced Flatten/output tail
  std::vector<Experience> experiences;   // one per action, rewards still zero
};

struct ModelSummary {
  std::size_t index = 0;
  std::size_t epoch = 0;
  std::vector<std::size_t> actions;
  std::vector<LayerSpec> architecture;
  double reward = 0.0;
  double epsilon = 0.0;  // after the model's actions were drawn
  std::size_t cache_hit_prefix_len = 0;
  std::int64_t parameter_count = 0;
  std::string failure;
  double wall_time_s = 0.0;

  bool operator==(const ModelSummary&) const = default;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  double max_reward = 0.0;
  double epsilon = 0.0;
  double controller_loss = 0.0;
  double mean_cache_hit = 0.0;
  std::size_t max_cache_hit = 0;
  std::size_t invalid_models = 0;
  bool target_synced = false;
  double wall_time_s = 0.0;

  bool operator==(const EpochSummary&) const = default;
};

struct SearchReport {
  std::vector<ModelSummary> models;
  std::vector<EpochSummary> epochs;
  double wall_time_seconds = 0.0;
  bool complete = false;

  /// Indices into `models` by reward (descending), earlier models first on ties.
  std::vector<std::size_t> ranking() const;
  std::optional<std::size_t> best() const;
  /// Mean reward of the best `k` models (fewer if fewer exist).
  double top_k_mean(std::size_t k) const;

  /// With include_timing false every wall-clock field is left out, so two runs
  /// with the same seed and configuration serialize identically.
  nlohmann::json to_json(std::size_t top_k, bool include_timing = true) const;
  static SearchReport from_json(const nlohmann::json& j);
};

/// Writes one CSV row per model: model_index, epoch, sequence, reward, epsilon,
/// cache_hit_prefix_len, wall_time_s.
void write_metrics_csv(const SearchReport& report, const std::filesystem::path& path);

/// Supplies a fixed architecture for a model index instead of sampling one.
using SequenceSource = std::function<std::vector<LayerSpec>(std::size_t model_index)>;
using EvaluatorFactory = std::function<std::unique_ptr<Evaluator>()>;

/// Builds the evaluator named by the configuration.
EvaluatorFactory default_evaluator_factory(const SearchConfig& cfg);

class SearchEngine {
 public:
  explicit SearchEngine(SearchConfig cfg, EvaluatorFactory factory = {});
  ~SearchEngine();

  SearchEngine(SearchEngine&&) noexcept;
  SearchEngine& operator=(SearchEngine&&) noexcept;

  void set_sequence_source(SequenceSource source) { source_ = std::move(source); }

  /// Samples one architecture with the main network, advancing epsilon.
  GeneratedSequence generate_sequence();

  /// One controller epoch: N models, then replay training and the sync check.
  /// Throws EvaluatorUnavailable; the engine must then be discarded.
  void run_epoch(const std::atomic<bool>* stop = nullptr);
  bool finished() const { return epoch_ >= cfg_.controller_epochs; }

  /// Runs the remaining epochs. With a checkpoint directory the state is saved
  /// after every epoch; a raised `stop` ends the run at the last saved epoch.
  SearchReport run(const std::atomic<bool>* stop = nullptr,
                   const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

  SearchReport report() const;

  /// Checkpoint layout: controller.bin, buffer.json, policy.json,
  /// weights-index.json (+ blobs/), rng.json, history.json, config.json and
  /// manifest.json holding the content hash of each file.
  void save_checkpoint(const std::filesystem::path& dir) const;
  /// Throws CorruptCheckpoint, VersionMismatch.
  static SearchEngine load_checkpoint(const std::filesystem::path& dir, EvaluatorFactory factory = {});

  const SearchConfig& config() const { return cfg_; }
  const ActionVocabulary& vocabulary() const { return *vocab_; }
  const ControllerState& controller() const { return cs_; }
  const MemoryBuffer& buffer() const { return buffer_; }
  const WeightStore& weight_store() const { return store_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t evaluator_calls() const { return evaluator_calls_; }

 private:
  struct Pending;

  void evaluate_wave(std::vector<Pending>& wave);
  double train_controller();
  Evaluator& evaluator(std::size_t slot);

  SearchConfig cfg_;
  std::shared_ptr<const ActionVocabulary> vocab_;
  DatasetInfo dataset_;
  LayerSpec output_layer_;
  ControllerState cs_;
  MemoryBuffer buffer_;
  WeightStore store_;
  nn::Rng rng_;
  nn::Rng train_rng_;
  std::size_t epoch_ = 0;
  std::vector<ModelSummary> history_;
  std::vector<EpochSummary> epoch_history_;
  EvaluatorFactory factory_;
  std::vector<std::unique_ptr<Evaluator>> evaluators_;
  SequenceSource source_;
  std::size_t evaluator_calls_ = 0;
};

/// Convenience wrapper: a fresh engine run to completion.
SearchReport run_search(const SearchConfig& cfg, EvaluatorFactory factory = {});

}  // namespace dqnas

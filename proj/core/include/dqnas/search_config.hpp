#pragma once

// Search configuration: a JSON document whose every key has a default. Files and
// dotted-key overrides may only set keys that already exist.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dqnas/evaluation.hpp"
#include "dqnas/qcontroller.hpp"
#include "dqnas/replay.hpp"
#include "dqnas/search_space.hpp"

namespace dqnas {

struct ControllerConfig {
  std::size_t state_width = 8;
  std::size_t hidden = 100;
  double dropout = 0.3;
  double learning_rate = 1e-3;
  std::size_t train_steps = 1;  // optimizer steps per controller epoch
  StateEncoding state_encoding = StateEncoding::LastLayer;
  bool train_dropout = true;

  bool operator==(const ControllerConfig&) const = default;
};

enum class EvaluatorKind : std::uint8_t { Surrogate, External };

struct EvaluatorConfig {
  EvaluatorKind kind = EvaluatorKind::Surrogate;
  std::string command;
  double timeout_seconds = 3600.0;
  std::vector<TrainingCombo> combos = all_training_combos();
  int epochs = 10;
  int batch_size = 4;
  double validation_split = 0.1;
  std::size_t pool_size = 1;
  int max_start_attempts = 3;

  bool operator==(const EvaluatorConfig&) const = default;
};

struct SearchConfig {
  VocabularyConfig vocabulary;
  std::size_t max_layers = 8;
  std::size_t models_per_epoch = 10;   // N
  std::size_t controller_epochs = 20;  // N'
  std::size_t batch_records = 64;      // k, model records per controller batch
  std::uint64_t seed = 0;
  std::string dataset = "surrogate";
  std::string output_dir = "dqnas-out";
  std::size_t report_top_k = 10;
  PolicyConfig policy;
  BellmanConfig bellman;
  ControllerConfig controller;
  ReplayConfig replay;
  RewardConfig reward;
  EvaluatorConfig evaluator;

  std::size_t total_models() const { return models_per_epoch * controller_epochs; }
  /// Throws ConfigError.
  void validate() const;
  bool operator==(const SearchConfig&) const = default;
};

void to_json(nlohmann::json& j, const SearchConfig& c);
/// Strict: unknown keys and mistyped values raise ConfigError.
void from_json(const nlohmann::json& j, SearchConfig& c);

/// Defaults overlaid with `j`, validated. Throws ConfigError.
SearchConfig config_from_json(const nlohmann::json& j);
/// Throws ConfigError (unreadable or malformed file included).
SearchConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a full config document. The value is read as JSON
/// when it parses, otherwise as a string. Throws ConfigError on unknown keys.
void apply_override(nlohmann::json& doc, std::string_view assignment);
SearchConfig apply_overrides(const SearchConfig& cfg, const std::vector<std::string>& assignments);

}  // namespace dqnas

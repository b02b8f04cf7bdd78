#pragma once

// Double-DQN decision logic: state encoding, epsilon-greedy selection, Bellman
// targets and main -> target synchronisation.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include <nlohmann/json.hpp>

#include "dqnas/constraints.hpp"
#include "dqnas/neural_core.hpp"
#include "dqnas/search_space.hpp"

namespace dqnas {

/// Reward recorded for an architecture that cannot be built or evaluated.
inline constexpr double kInvalidReward = -10.0;

// Epsilon after k random actions is max(epsilon_min, epsilon - decay * k), computed
// from the count so the schedule carries no accumulated rounding.
struct PolicyConfig {
  double epsilon = 1.0;  // starting value
  double decay = 0.05;
  double epsilon_min = 0.1;
  std::uint64_t random_actions = 0;

  double current_epsilon() const;

  void validate() const;
  bool operator==(const PolicyConfig&) const = default;
};

struct BellmanConfig {
  double gamma = 0.9;
  std::size_t sync_period = 5;
  // Choose A' with the main network and score it with the target network.
  bool double_dqn_canonical = false;

  void validate() const;
  bool operator==(const BellmanConfig&) const = default;
};

// Optional accuracy/energy trade-off R = alpha * accuracy - (1 - alpha) * energy,
// with energy approximated by log10(parameters) / 10 clamped to [0, 1].
struct RewardConfig {
  double alpha = 1.0;

  void validate() const;
  bool operator==(const RewardConfig&) const = default;
};

double energy_proxy(std::int64_t parameter_count);
double model_reward(double accuracy, std::int64_t parameter_count, const RewardConfig& cfg);

enum class StateEncoding : std::uint8_t { LastLayer, FullPrefix };

/// Controller input for a partial architecture.
///
/// Each layer becomes (kind ordinal + 1) / 14 followed by (ordinal + 1) / |domain|
/// for every parameter it carries, zero-padded or truncated to `width`. The empty
/// prefix is all zeros. LastLayer yields [1 x width]; FullPrefix yields one row per
/// layer.
nn::Tensor encode_state(const ActionVocabulary& vocab, std::span<const LayerSpec> prefix,
                        std::size_t width, StateEncoding encoding = StateEncoding::LastLayer);

struct ActionChoice {
  std::size_t index = 0;
  bool was_random = false;
};

/// Epsilon-greedy over the allowed actions; greedy ties go to the lowest index.
/// Throws EmptyMask, DimensionMismatch.
ActionChoice select_action(std::span<const double> q, const ActionMask& mask,
                           const PolicyConfig& pol, nn::Rng& rng);

/// Index of the largest allowed Q-value (lowest index on ties). Throws EmptyMask.
std::size_t masked_argmax(std::span<const double> q, const ActionMask& mask);

PolicyConfig decay_epsilon(PolicyConfig pol, bool was_random);

struct Experience {
  nn::Tensor state;
  std::size_t action = 0;
  double reward = 0.0;
  std::optional<nn::Tensor> next_state;  // empty for the terminal transition
  PrefixState next_prefix;

  bool terminal() const { return !next_state.has_value(); }
  bool operator==(const Experience&) const = default;
};

void to_json(nlohmann::json& j, const Experience& e);
void from_json(const nlohmann::json& j, Experience& e);

/// r for terminal transitions, else r + gamma * Q_T(S', A') over the allowed A'.
/// Evaluated with dropout off. Throws EmptyMask.
double bellman_target(double reward, const BellmanConfig& cfg, const nn::QNetParams& target_net,
                      const std::optional<nn::Tensor>& next_state, const ActionMask& next_mask,
                      const nn::QNetParams* main_net = nullptr);

struct ControllerState {
  nn::QNetParams main;
  nn::QNetParams target;
  PolicyConfig policy;
  nn::AdamState optimizer;
  std::size_t epochs_since_sync = 0;
  std::uint64_t rng_seed = 0;
};

/// Fresh controller whose target starts as a copy of main.
ControllerState make_controller(const nn::QNetShape& shape, const PolicyConfig& policy,
                                double learning_rate, std::uint64_t seed);

/// Copies main into target and resets the epoch counter.
void sync_target(ControllerState& cs);

}  // namespace dqnas

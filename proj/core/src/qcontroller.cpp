#include "dqnas/qcontroller.hpp"

#include <algorithm>
#include <cmath>

#include "dqnas/error.hpp"

namespace dqnas {

double PolicyConfig::current_epsilon() const {
  return std::max(epsilon_min, epsilon - decay * static_cast<double>(random_actions));
}

void PolicyConfig::validate() const {
  if (!(0.0 <= epsilon_min && epsilon_min <= epsilon && epsilon <= 1.0)) {
    throw ConfigError("policy needs 0 <= epsilon_min <= epsilon <= 1");
  }
  if (!(decay > 0.0)) throw ConfigError("policy decay must be positive");
}

void BellmanConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (sync_period < 1) throw ConfigError("sync period must be at least 1");
}

void RewardConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("reward alpha must lie in [0, 1]");
}

double energy_proxy(std::int64_t parameter_count) {
  if (parameter_count <= 1) return 0.0;
  return std::clamp(std::log10(static_cast<double>(parameter_count)) / 10.0, 0.0, 1.0);
}

double model_reward(double accuracy, std::int64_t parameter_count, const RewardConfig& cfg) {
  if (cfg.alpha == 1.0) return accuracy;
  return cfg.alpha * accuracy - (1.0 - cfg.alpha) * energy_proxy(parameter_count);
}

nn::Tensor encode_state(const ActionVocabulary& vocab, std::span<const LayerSpec> prefix,
                        std::size_t width, StateEncoding encoding) {
  const std::size_t rows =
      encoding == StateEncoding::LastLayer ? 1 : std::max<std::size_t>(1, prefix.size());
  nn::Tensor out({rows, width});
  if (prefix.empty()) return out;

  const std::size_t first = encoding == StateEncoding::LastLayer ? prefix.size() - 1 : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const LayerSpec& layer = prefix[first + r];
    double* row = out.data().data() + r * width;
    std::size_t col = 0;
    auto put = [&](double v) {
      if (col < width) row[col] = v;
      ++col;
    };
    put(static_cast<double>(ordinal(layer.kind) + 1) / static_cast<double>(kLayerKindCount));
    for (Param p : params_of(layer.kind)) {
      const auto ord = vocab.param_ordinal(layer, p);
      put(ord ? static_cast<double>(*ord + 1) / static_cast<double>(vocab.config().domain_size(p))
              : 0.0);
    }
  }
  return out;
}

std::size_t masked_argmax(std::span<const double> q, const ActionMask& mask) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] && (!best || q[i] > q[*best])) best = i;
  }
  if (!best) throw EmptyMask("no action is allowed");
  return *best;
}

ActionChoice select_action(std::span<const double> q, const ActionMask& mask,
                           const PolicyConfig& pol, nn::Rng& rng) {
  if (q.size() != mask.size()) throw DimensionMismatch("Q-values and mask differ in length");
  const auto allowed = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
  if (allowed == 0) throw EmptyMask("no action is allowed");

  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < pol.current_epsilon()) {
    std::uniform_int_distribution<std::size_t> pick(0, allowed - 1);
    std::size_t k = pick(rng);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] && k-- == 0) return {i, true};
    }
  }
  return {masked_argmax(q, mask), false};
}

PolicyConfig decay_epsilon(PolicyConfig pol, bool was_random) {
  if (was_random && pol.current_epsilon() > pol.epsilon_min) ++pol.random_actions;
  return pol;
}

namespace {

nlohmann::json tensor_json(const nn::Tensor& t) {
  return {{"dims", t.dims()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

nn::Tensor tensor_from(const nlohmann::json& j) {
  return nn::Tensor(j.at("dims").get<std::vector<std::size_t>>(),
                    j.at("data").get<std::vector<double>>());
}

}  // namespace

void to_json(nlohmann::json& j, const Experience& e) {
  j = nlohmann::json{{"state", tensor_json(e.state)},
                     {"action", e.action},
                     {"reward", e.reward},
                     {"next_state", e.next_state ? tensor_json(*e.next_state) : nlohmann::json(nullptr)},
                     {"next_prefix", e.next_prefix}};
}

void from_json(const nlohmann::json& j, Experience& e) {
  e.state = tensor_from(j.at("state"));
  e.action = j.at("action").get<std::size_t>();
  e.reward = j.at("reward").get<double>();
  const auto& ns = j.at("next_state");
  e.next_state = ns.is_null() ? std::nullopt : std::optional(tensor_from(ns));
  e.next_prefix = j.at("next_prefix").get<PrefixState>();
}

double bellman_target(double reward, const BellmanConfig& cfg, const nn::QNetParams& target_net,
                      const std::optional<nn::Tensor>& next_state, const ActionMask& next_mask,
                      const nn::QNetParams* main_net) {
  if (!next_state) return reward;
  if (cfg.gamma == 0.0) return reward;
  const nn::Tensor qt = nn::qnet_forward(target_net, *next_state, false);
  std::size_t best = 0;
  if (cfg.double_dqn_canonical && main_net != nullptr) {
    const nn::Tensor qm = nn::qnet_forward(*main_net, *next_state, false);
    best = masked_argmax(qm.data(), next_mask);
  } else {
    best = masked_argmax(qt.data(), next_mask);
  }
  return reward + cfg.gamma * qt[best];
}

ControllerState make_controller(const nn::QNetShape& shape, const PolicyConfig& policy,
                                double learning_rate, std::uint64_t seed) {
  policy.validate();
  ControllerState cs;
  cs.main = nn::QNetParams::uniform(shape, seed);
  cs.target = cs.main;
  cs.policy = policy;
  cs.optimizer = nn::AdamState(cs.main.size(), learning_rate);
  cs.rng_seed = seed;
  return cs;
}

void sync_target(ControllerState& cs) {
  cs.target = cs.main;
  cs.epochs_since_sync = 0;
}

}  // namespace dqnas

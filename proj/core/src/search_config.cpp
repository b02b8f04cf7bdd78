#include "dqnas/search_config.hpp"

#include "dqnas/error.hpp"
#include "io_util.hpp"

namespace dqnas {

using nlohmann::json;

namespace {

std::string_view to_string(StateEncoding e) {
  return e == StateEncoding::LastLayer ? "last_layer" : "full_prefix";
}

StateEncoding parse_encoding(const std::string& s) {
  if (s == "last_layer") return StateEncoding::LastLayer;
  if (s == "full_prefix") return StateEncoding::FullPrefix;
  throw ConfigError("controller.state_encoding must be last_layer or full_prefix, got '" + s + "'");
}

std::string_view to_string(EvaluatorKind k) {
  return k == EvaluatorKind::Surrogate ? "surrogate" : "external";
}

EvaluatorKind parse_evaluator_kind(const std::string& s) {
  if (s == "surrogate") return EvaluatorKind::Surrogate;
  if (s == "external") return EvaluatorKind::External;
  throw ConfigError("evaluator.kind must be surrogate or external, got '" + s + "'");
}

// Overlays `patch` on `base`; every key of `patch` must already exist in `base`.
// Objects merge recursively, everything else is replaced.
void strict_merge(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("expected an object at '" + where + "'");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown configuration key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object() && slot.size() > 0) {
      strict_merge(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

}  // namespace

void SearchConfig::validate() const {
  vocabulary.validate();
  if (max_layers < 1) throw ConfigError("max_layers must be at least 1");
  if (models_per_epoch < 1) throw ConfigError("models_per_epoch must be at least 1");
  if (controller_epochs < 1) throw ConfigError("controller_epochs must be at least 1");
  if (batch_records < 1) throw ConfigError("batch_records must be at least 1");
  if (report_top_k < 1) throw ConfigError("report_top_k must be at least 1");
  if (!vocabulary.kind_enabled(LayerKind::Flatten)) {
    throw ConfigError("the vocabulary must contain Flatten");
  }
  bool any_conv = false;
  for (LayerKind k : vocabulary.kinds) any_conv = any_conv || is_conv(k);
  if (!any_conv) throw ConfigError("the vocabulary must contain a convolution kind");
  dataset_info(dataset);
  policy.validate();
  bellman.validate();
  replay.validate();
  reward.validate();
  if (controller.state_width < 1) throw ConfigError("controller.state_width must be at least 1");
  if (controller.hidden < 1) throw ConfigError("controller.hidden must be at least 1");
  if (!(controller.dropout >= 0.0 && controller.dropout < 1.0)) {
    throw ConfigError("controller.dropout must lie in [0, 1)");
  }
  if (!(controller.learning_rate > 0.0)) throw ConfigError("controller.learning_rate must be positive");
  if (controller.train_steps < 1) throw ConfigError("controller.train_steps must be at least 1");
  if (evaluator.kind == EvaluatorKind::External && evaluator.command.empty()) {
    throw ConfigError("the external evaluator needs evaluator.command");
  }
  if (!(evaluator.timeout_seconds > 0.0)) throw ConfigError("evaluator.timeout_seconds must be positive");
  if (evaluator.combos.empty()) throw ConfigError("evaluator.combos must not be empty");
  if (evaluator.epochs < 1) throw ConfigError("evaluator.epochs must be at least 1");
  if (evaluator.batch_size < 1) throw ConfigError("evaluator.batch_size must be at least 1");
  if (!(evaluator.validation_split > 0.0 && evaluator.validation_split < 1.0)) {
    throw ConfigError("evaluator.validation_split must lie strictly between 0 and 1");
  }
  if (evaluator.pool_size < 1) throw ConfigError("evaluator.pool_size must be at least 1");
  if (evaluator.max_start_attempts < 1) throw ConfigError("evaluator.max_start_attempts must be at least 1");
}

void to_json(json& j, const SearchConfig& c) {
  j = json{{"vocabulary", c.vocabulary},
           {"max_layers", c.max_layers},
           {"models_per_epoch", c.models_per_epoch},
           {"controller_epochs", c.controller_epochs},
           {"batch_records", c.batch_records},
           {"seed", c.seed},
           {"dataset", c.dataset},
           {"output_dir", c.output_dir},
           {"report_top_k", c.report_top_k},
           {"policy",
            {{"epsilon", c.policy.epsilon},
             {"decay", c.policy.decay},
             {"epsilon_min", c.policy.epsilon_min}}},
           {"bellman",
            {{"gamma", c.bellman.gamma},
             {"sync_period", c.bellman.sync_period},
             {"double_dqn_canonical", c.bellman.double_dqn_canonical}}},
           {"controller",
            {{"state_width", c.controller.state_width},
             {"hidden", c.controller.hidden},
             {"dropout", c.controller.dropout},
             {"learning_rate", c.controller.learning_rate},
             {"train_steps", c.controller.train_steps},
             {"state_encoding", to_string(c.controller.state_encoding)},
             {"train_dropout", c.controller.train_dropout}}},
           {"replay",
            {{"capacity", c.replay.capacity},
             {"top_fraction", c.replay.top_fraction},
             {"uniform_fraction", c.replay.uniform_fraction},
             {"invalid_fraction", c.replay.invalid_fraction}}},
           {"reward", {{"alpha", c.reward.alpha}}},
           {"evaluator",
            {{"kind", to_string(c.evaluator.kind)},
             {"command", c.evaluator.command},
             {"timeout_seconds", c.evaluator.timeout_seconds},
             {"combos", c.evaluator.combos},
             {"epochs", c.evaluator.epochs},
             {"batch_size", c.evaluator.batch_size},
             {"validation_split", c.evaluator.validation_split},
             {"pool_size", c.evaluator.pool_size},
             {"max_start_attempts", c.evaluator.max_start_attempts}}}};
}

void from_json(const json& patch, SearchConfig& c) {
  json j = SearchConfig{};
  strict_merge(j, patch, "");
  try {
    SearchConfig out;
    out.vocabulary = j.at("vocabulary").get<VocabularyConfig>();
    out.max_layers = j.at("max_layers").get<std::size_t>();
    out.models_per_epoch = j.at("models_per_epoch").get<std::size_t>();
    out.controller_epochs = j.at("controller_epochs").get<std::size_t>();
    out.batch_records = j.at("batch_records").get<std::size_t>();
    out.seed = j.at("seed").get<std::uint64_t>();
    out.dataset = j.at("dataset").get<std::string>();
    out.output_dir = j.at("output_dir").get<std::string>();
    out.report_top_k = j.at("report_top_k").get<std::size_t>();

    const json& p = j.at("policy");
    out.policy = {p.at("epsilon").get<double>(), p.at("decay").get<double>(),
                  p.at("epsilon_min").get<double>(), 0};

    const json& b = j.at("bellman");
    out.bellman = {b.at("gamma").get<double>(), b.at("sync_period").get<std::size_t>(),
                   b.at("double_dqn_canonical").get<bool>()};

    const json& q = j.at("controller");
    out.controller.state_width = q.at("state_width").get<std::size_t>();
    out.controller.hidden = q.at("hidden").get<std::size_t>();
    out.controller.dropout = q.at("dropout").get<double>();
    out.controller.learning_rate = q.at("learning_rate").get<double>();
    out.controller.train_steps = q.at("train_steps").get<std::size_t>();
    out.controller.state_encoding = parse_encoding(q.at("state_encoding").get<std::string>());
    out.controller.train_dropout = q.at("train_dropout").get<bool>();

    const json& r = j.at("replay");
    out.replay = {r.at("capacity").get<std::size_t>(), r.at("top_fraction").get<double>(),
                  r.at("uniform_fraction").get<double>(), r.at("invalid_fraction").get<double>()};

    out.reward.alpha = j.at("reward").at("alpha").get<double>();

    const json& e = j.at("evaluator");
    out.evaluator.kind = parse_evaluator_kind(e.at("kind").get<std::string>());
    out.evaluator.command = e.at("command").get<std::string>();
    out.evaluator.timeout_seconds = e.at("timeout_seconds").get<double>();
    out.evaluator.combos = e.at("combos").get<std::vector<TrainingCombo>>();
    out.evaluator.epochs = e.at("epochs").get<int>();
    out.evaluator.batch_size = e.at("batch_size").get<int>();
    out.evaluator.validation_split = e.at("validation_split").get<double>();
    out.evaluator.pool_size = e.at("pool_size").get<std::size_t>();
    out.evaluator.max_start_attempts = e.at("max_start_attempts").get<int>();
    c = std::move(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

SearchConfig config_from_json(const json& j) {
  SearchConfig c = j.get<SearchConfig>();
  c.validate();
  return c;
}

SearchConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(detail::read_text(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));

  json* slot = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!slot->is_object() || !slot->contains(part)) {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }

  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *slot = std::move(value);
}

SearchConfig apply_overrides(const SearchConfig& cfg, const std::vector<std::string>& assignments) {
  json doc = cfg;
  for (const auto& a : assignments) apply_override(doc, a);
  return config_from_json(doc);
}

}  // namespace dqnas

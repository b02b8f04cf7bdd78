#include "dqnas/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <strings.h>

#include "dqnas/error.hpp"

namespace dqnas {

using nlohmann::json;

std::string_view to_string(Optimizer o) {
  switch (o) {
    case Optimizer::Adam:
      return "Adam";
    case Optimizer::RMSProp:
      return "RMSProp";
    case Optimizer::SGD:
      return "SGD";
  }
  return "?";
}

Optimizer parse_optimizer(std::string_view s) {
  for (Optimizer o : {Optimizer::Adam, Optimizer::RMSProp, Optimizer::SGD}) {
    const auto name = to_string(o);
    if (name.size() == s.size() && strncasecmp(name.data(), s.data(), s.size()) == 0) return o;
  }
  throw ParseError("unknown optimizer '" + std::string(s) + "'");
}

void to_json(json& j, const TrainingCombo& c) {
  j = json{{"learning_rate", c.learning_rate}, {"optimizer", to_string(c.optimizer)}};
}

void from_json(const json& j, TrainingCombo& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
}

std::vector<TrainingCombo> all_training_combos() {
  std::vector<TrainingCombo> out;
  for (double lr : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}) {
    for (Optimizer o : {Optimizer::Adam, Optimizer::RMSProp, Optimizer::SGD}) out.push_back({lr, o});
  }
  return out;
}

const DatasetInfo& dataset_info(std::string_view name) {
  static const std::array<DatasetInfo, 4> table{{
      {"mnist", 60000, 10000, {28, 28, 1, false}, 10},
      {"cifar10", 50000, 10000, {32, 32, 3, false}, 10},
      {"cifar100", 50000, 10000, {32, 32, 3, false}, 100},
      {"surrogate", 60000, 10000, {28, 28, 1, false}, 10},
  }};
  for (const auto& d : table) {
    if (d.name == name) return d;
  }
  throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

void EvaluationRequest::validate() const {
  if (architecture.empty()) throw ConfigError("request has an empty architecture");
  if (combos.empty()) throw ConfigError("request needs at least one training combo");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(validation_split > 0.0 && validation_split < 1.0)) {
    throw ConfigError("validation_split must lie strictly between 0 and 1");
  }
  for (const auto& b : prefix_blobs) {
    if (b.layer >= architecture.size()) throw ConfigError("prefix blob index past the architecture");
  }
  dataset_info(dataset_id);
}

void EvaluationResult::check_invariants() const {
  if (per_combo.empty()) throw ProtocolError("result " + id + " has no per-combo accuracies");
  double best = -1.0;
  for (const auto& c : per_combo) {
    if (!(c.val_accuracy >= 0.0 && c.val_accuracy <= 1.0)) {
      throw ProtocolError("result " + id + " has an accuracy outside [0, 1]");
    }
    best = std::max(best, c.val_accuracy);
  }
  if (std::abs(best - best_val_accuracy) > 1e-9) {
    throw ProtocolError("result " + id + " reports best_val_accuracy " +
                        std::to_string(best_val_accuracy) + " but the per-combo maximum is " +
                        std::to_string(best));
  }
}

EvaluationRequest final_retrain_request(std::span<const LayerSpec> arch, std::string dataset_id,
                                        std::uint64_t seed) {
  EvaluationRequest req;
  req.id = "final-retrain";
  req.architecture.assign(arch.begin(), arch.end());
  req.dataset_id = std::move(dataset_id);
  req.combos = {TrainingCombo{0.01, Optimizer::Adam}};
  req.epochs = 40;
  req.seed = seed;
  return req;
}

namespace {

json blobs_json(const std::vector<IndexedBlob>& blobs) {
  json out = json::array();
  for (const auto& b : blobs) out.push_back({{"layer", b.layer}, {"blob", base64_encode(b.blob)}});
  return out;
}

std::vector<IndexedBlob> blobs_from(const json& j) {
  std::vector<IndexedBlob> out;
  for (const auto& e : j) {
    out.push_back({e.at("layer").get<std::size_t>(), base64_decode(e.at("blob").get<std::string>())});
  }
  return out;
}

void expect_type(const json& j, std::string_view type) {
  if (!j.is_object() || !j.contains("type") || j["type"] != type) {
    throw ProtocolError("expected a '" + std::string(type) + "' message, got " + j.dump());
  }
}

}  // namespace

json hello_message(const std::vector<std::string>& capabilities) {
  return {{"type", "hello"}, {"protocol", kProtocolVersion}, {"capabilities", capabilities}};
}

void check_hello(const json& j) {
  expect_type(j, "hello");
  if (!j.contains("protocol") || j["protocol"] != kProtocolVersion) {
    throw ProtocolError("unsupported worker protocol " +
                        (j.contains("protocol") ? j["protocol"].dump() : std::string("(missing)")));
  }
}

json request_message(const EvaluationRequest& req) {
  const DatasetInfo& ds = dataset_info(req.dataset_id);
  return {{"type", "evaluate"},
          {"id", req.id},
          {"architecture", architecture_to_json(req.architecture)},
          {"dataset_id", req.dataset_id},
          {"input_shape", {ds.input_shape.h, ds.input_shape.w, ds.input_shape.c}},
          {"num_classes", ds.num_classes},
          {"combos", req.combos},
          {"epochs", req.epochs},
          {"batch_size", req.batch_size},
          {"validation_split", req.validation_split},
          {"prefix_blobs", blobs_json(req.prefix_blobs)},
          {"seed", req.seed}};
}

EvaluationRequest parse_request_message(const json& j) {
  expect_type(j, "evaluate");
  EvaluationRequest req;
  try {
    req.id = j.at("id").get<std::string>();
    req.architecture = architecture_from_json(j.at("architecture"));
    req.dataset_id = j.at("dataset_id").get<std::string>();
    req.combos = j.at("combos").get<std::vector<TrainingCombo>>();
    req.epochs = j.at("epochs").get<int>();
    req.batch_size = j.at("batch_size").get<int>();
    req.validation_split = j.at("validation_split").get<double>();
    req.prefix_blobs = blobs_from(j.at("prefix_blobs"));
    req.seed = j.at("seed").get<std::uint64_t>();
    req.validate();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed evaluate message: ") + e.what());
  } catch (const ProtocolError&) {
    throw;
  } catch (const Error& e) {
    throw ProtocolError(std::string("invalid evaluate message: ") + e.what());
  }
  return req;
}

json result_message(const EvaluationResult& res) {
  json per = json::array();
  for (const auto& c : res.per_combo) {
    json e = c.combo;
    e["val_accuracy"] = c.val_accuracy;
    per.push_back(std::move(e));
  }
  return {{"type", "result"},
          {"id", res.id},
          {"per_combo", per},
          {"best_val_accuracy", res.best_val_accuracy},
          {"updated_blobs", blobs_json(res.updated_blobs)},
          {"parameter_count", res.parameter_count},
          {"wall_time_seconds", res.wall_time_seconds}};
}

EvaluationResult parse_result_message(const json& j) {
  expect_type(j, "result");
  EvaluationResult res;
  try {
    res.id = j.at("id").get<std::string>();
    for (const auto& e : j.at("per_combo")) {
      res.per_combo.push_back({e.get<TrainingCombo>(), e.at("val_accuracy").get<double>()});
    }
    res.best_val_accuracy = j.at("best_val_accuracy").get<double>();
    res.updated_blobs = blobs_from(j.value("updated_blobs", json::array()));
    res.parameter_count = j.value("parameter_count", std::int64_t{0});
    res.wall_time_seconds = j.value("wall_time_seconds", 0.0);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed result message: ") + e.what());
  } catch (const ParseError& e) {
    throw ProtocolError(std::string("malformed result message: ") + e.what());
  }
  res.check_invariants();
  return res;
}

json error_message(const std::string& id, const std::string& message) {
  return {{"type", "error"}, {"id", id}, {"message", message}};
}

double surrogate_structural_score(std::span<const LayerSpec> arch, std::int64_t parameter_count) {
  int n_conv = 0;
  bool pooling = false;
  bool dropout_after_pool = false;
  bool batch_norm = false;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const LayerKind k = arch[i].kind;
    if (is_conv(k)) ++n_conv;
    if (is_pool(k)) pooling = true;
    if (k == LayerKind::BatchNorm) batch_norm = true;
    if (k == LayerKind::Dropout && i > 0 && is_pool(arch[i - 1].kind)) dropout_after_pool = true;
  }
  double s = 0.25 + 0.10 * std::min(n_conv, 4) - 0.05 * std::max(0, n_conv - 5);
  if (pooling) s += 0.06;
  if (dropout_after_pool) s += 0.04;
  if (batch_norm) s += 0.03;
  if (parameter_count > 0) {
    s -= 0.04 * std::max(0.0, std::log10(static_cast<double>(parameter_count)) - 6.0);
  }
  return s;
}

double surrogate_noise(std::span<const LayerSpec> arch, std::uint64_t seed) {
  const std::string key = architecture_to_string(arch) + "#" + std::to_string(seed);
  const std::uint64_t h = low64(hash128(key));
  return static_cast<double>(h % 1000) / 1000.0 * 0.02 - 0.01;
}

EvaluationResult surrogate_evaluate(std::span<const LayerSpec> arch, std::uint64_t seed,
                                    const TensorShape& input, std::span<const TrainingCombo> combos) {
  const std::int64_t params = count_parameters(arch, input);
  const double s =
      std::clamp(surrogate_structural_score(arch, params) + surrogate_noise(arch, seed), 0.0, 1.0);

  EvaluationResult res;
  const auto all = all_training_combos();
  const std::span<const TrainingCombo> used = combos.empty() ? std::span(all) : combos;
  for (const auto& c : used) res.per_combo.push_back({c, s});
  res.best_val_accuracy = s;
  res.parameter_count = params;
  return res;
}

EvaluationResult SurrogateEvaluator::evaluate(const EvaluationRequest& req) {
  EvaluationResult res = surrogate_evaluate(req.architecture, req.seed, input_, req.combos);
  res.id = req.id;
  return res;
}

}  // namespace dqnas

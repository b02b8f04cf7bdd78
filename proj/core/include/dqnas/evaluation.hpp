#pragma once

// Evaluator contract, the closed-form surrogate evaluator and the newline-delimited
// JSON messages exchanged with external training workers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dqnas/hashing.hpp"
#include "dqnas/search_space.hpp"
#include "dqnas/shape_engine.hpp"

namespace dqnas {

inline constexpr int kProtocolVersion = 1;

enum class Optimizer : std::uint8_t { Adam, RMSProp, SGD };

std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view s);

struct TrainingCombo {
  double learning_rate = 0.1;
  Optimizer optimizer = Optimizer::Adam;

  bool operator==(const TrainingCombo&) const = default;
};

void to_json(nlohmann::json& j, const TrainingCombo& c);
void from_json(const nlohmann::json& j, TrainingCombo& c);

/// Learning rates 0.1..0.6 crossed with Adam, RMSProp, SGD (rate-major).
std::vector<TrainingCombo> all_training_combos();

struct DatasetInfo {
  std::string name;
  std::int64_t train_count = 0;
  std::int64_t test_count = 0;
  TensorShape input_shape;
  int num_classes = 0;
};

/// mnist, cifar10, cifar100, and "surrogate" (MNIST-shaped). Throws ConfigError.
const DatasetInfo& dataset_info(std::string_view name);

struct IndexedBlob {
  std::size_t layer = 0;
  Blob blob;

  bool operator==(const IndexedBlob&) const = default;
};

struct EvaluationRequest {
  std::string id;
  std::vector<LayerSpec> architecture;
  std::string dataset_id = "surrogate";
  std::vector<TrainingCombo> combos;
  int epochs = 10;
  int batch_size = 4;
  double validation_split = 0.1;
  std::vector<IndexedBlob> prefix_blobs;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  bool operator==(const EvaluationRequest&) const = default;
};

struct ComboAccuracy {
  TrainingCombo combo;
  double val_accuracy = 0.0;

  bool operator==(const ComboAccuracy&) const = default;
};

struct EvaluationResult {
  std::string id;
  std::vector<ComboAccuracy> per_combo;
  double best_val_accuracy = 0.0;
  std::vector<IndexedBlob> updated_blobs;
  std::int64_t parameter_count = 0;
  double wall_time_seconds = 0.0;

  /// best == max(per_combo), every accuracy in [0, 1]. Throws ProtocolError.
  void check_invariants() const;
  bool operator==(const EvaluationResult&) const = default;
};

/// Retraining of a chosen architecture: one combo (Adam, 0.01), 40 epochs.
EvaluationRequest final_retrain_request(std::span<const LayerSpec> arch, std::string dataset_id,
                                        std::uint64_t seed);

// Wire messages. Blobs travel base64-encoded.
nlohmann::json hello_message(const std::vector<std::string>& capabilities);
/// Throws ProtocolError unless `j` is a hello with protocol 1.
void check_hello(const nlohmann::json& j);
nlohmann::json request_message(const EvaluationRequest& req);
/// Throws ProtocolError.
EvaluationRequest parse_request_message(const nlohmann::json& j);
nlohmann::json result_message(const EvaluationResult& res);
/// Parses and checks invariants. Throws ProtocolError.
EvaluationResult parse_result_message(const nlohmann::json& j);
nlohmann::json error_message(const std::string& id, const std::string& message);

class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual EvaluationResult evaluate(const EvaluationRequest& req) = 0;
  virtual std::string name() const = 0;
};

/// Closed-form score:
///   0.25 + 0.10 min(n_conv, 4) - 0.05 max(0, n_conv - 5) + 0.06 [pooling]
///   + 0.04 [Dropout right after pooling] + 0.03 [BatchNorm]
///   - 0.04 max(0, log10 P - 6) + eta,  clamped to [0, 1],
/// with eta = (stable_hash(arch, seed) mod 1000) / 1000 * 0.02 - 0.01.
double surrogate_structural_score(std::span<const LayerSpec> arch, std::int64_t parameter_count);
double surrogate_noise(std::span<const LayerSpec> arch, std::uint64_t seed);

/// Reports the score for every combo (all 18 when `combos` is empty); no blobs.
/// Throws InvalidArchitecture.
EvaluationResult surrogate_evaluate(std::span<const LayerSpec> arch, std::uint64_t seed,
                                    const TensorShape& input = dataset_info("mnist").input_shape,
                                    std::span<const TrainingCombo> combos = {});

class SurrogateEvaluator : public Evaluator {
 public:
  explicit SurrogateEvaluator(TensorShape input = dataset_info("mnist").input_shape)
      : input_(input) {}

  EvaluationResult evaluate(const EvaluationRequest& req) override;
  std::string name() const override { return "surrogate"; }

 private:
  TensorShape input_;
};

}  // namespace dqnas

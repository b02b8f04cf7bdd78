#pragma once

// Memory buffer of evaluated models with stratified prioritized sampling: the
// best valid models, a uniform slice, and the most recent invalid models.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dqnas/neural_core.hpp"
#include "dqnas/qcontroller.hpp"
#include "dqnas/search_space.hpp"

namespace dqnas {

struct ModelRecord {
  std::vector<std::size_t> sequence;  // sampled action indices, Terminate included
  std::vector<LayerSpec> architecture;
  double reward = 0.0;
  std::uint64_t insertion_ordinal = 0;
  std::vector<Experience> experiences;
  std::string failure;  // why the model got the sentinel, empty otherwise

  bool invalid() const { return reward == kInvalidReward; }
  bool operator==(const ModelRecord&) const = default;
};

void to_json(nlohmann::json& j, const ModelRecord& r);
void from_json(const nlohmann::json& j, ModelRecord& r);

struct ReplayConfig {
  std::size_t capacity = 512;
  double top_fraction = 0.5;
  double uniform_fraction = 0.25;
  double invalid_fraction = 0.25;

  void validate() const;
  bool operator==(const ReplayConfig&) const = default;
};

class MemoryBuffer {
 public:
  explicit MemoryBuffer(ReplayConfig cfg = {});

  /// Appends, evicting the oldest record once over capacity.
  void record_model(ModelRecord rec);

  /// Exactly k records: ceil(k * top) best valid ones (reward, then recency),
  /// ceil(k * uniform) uniform draws, the rest from the newest invalid records,
  /// padded with uniform draws. Throws EmptyBuffer.
  std::vector<const ModelRecord*> sample_records(std::size_t k, nn::Rng& rng) const;

  /// Every experience of the records chosen by sample_records.
  std::vector<Experience> sample_batch(std::size_t k, nn::Rng& rng) const;

  /// Valid records ranked by reward, ties by recency.
  std::vector<const ModelRecord*> ranked_valid() const;

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::deque<ModelRecord>& records() const { return records_; }
  const ReplayConfig& config() const { return cfg_; }

  nlohmann::json to_json() const;
  static MemoryBuffer from_json(const nlohmann::json& j);

 private:
  ReplayConfig cfg_;
  std::deque<ModelRecord> records_;
};

void record_model(MemoryBuffer& buf, ModelRecord rec);
std::vector<Experience> sample_batch(const MemoryBuffer& buf, std::size_t k, nn::Rng& rng);

}  // namespace dqnas

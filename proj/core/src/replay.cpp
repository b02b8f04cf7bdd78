#include "dqnas/replay.hpp"

#include <algorithm>
#include <cmath>

#include "dqnas/error.hpp"

namespace dqnas {

void to_json(nlohmann::json& j, const ModelRecord& r) {
  j = nlohmann::json{{"sequence", r.sequence},
                     {"architecture", architecture_to_json(r.architecture)},
                     {"reward", r.reward},
                     {"insertion_ordinal", r.insertion_ordinal},
                     {"experiences", r.experiences},
                     {"failure", r.failure}};
}

void from_json(const nlohmann::json& j, ModelRecord& r) {
  r.sequence = j.at("sequence").get<std::vector<std::size_t>>();
  r.architecture = architecture_from_json(j.at("architecture"));
  r.reward = j.at("reward").get<double>();
  r.insertion_ordinal = j.at("insertion_ordinal").get<std::uint64_t>();
  r.experiences = j.at("experiences").get<std::vector<Experience>>();
  r.failure = j.value("failure", std::string());
}

void ReplayConfig::validate() const {
  if (capacity < 1) throw ConfigError("replay capacity must be at least 1");
  for (double f : {top_fraction, uniform_fraction, invalid_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("replay fractions must lie in [0, 1]");
  }
  if (std::abs(top_fraction + uniform_fraction + invalid_fraction - 1.0) > 1e-9) {
    throw ConfigError("replay fractions must sum to 1");
  }
}

MemoryBuffer::MemoryBuffer(ReplayConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void MemoryBuffer::record_model(ModelRecord rec) {
  records_.push_back(std::move(rec));
  while (records_.size() > cfg_.capacity) records_.pop_front();
}

std::vector<const ModelRecord*> MemoryBuffer::ranked_valid() const {
  std::vector<const ModelRecord*> valid;
  for (const auto& r : records_) {
    if (!r.invalid()) valid.push_back(&r);
  }
  std::stable_sort(valid.begin(), valid.end(), [](const ModelRecord* a, const ModelRecord* b) {
    if (a->reward != b->reward) return a->reward > b->reward;
    return a->insertion_ordinal > b->insertion_ordinal;
  });
  return valid;
}

std::vector<const ModelRecord*> MemoryBuffer::sample_records(std::size_t k, nn::Rng& rng) const {
  if (records_.empty()) throw EmptyBuffer("cannot sample from an empty memory buffer");
  if (k == 0) return {};

  const auto slice = [k](double f) {
    return static_cast<std::size_t>(std::ceil(static_cast<double>(k) * f - 1e-12));
  };
  const std::size_t n_top = std::min(k, slice(cfg_.top_fraction));
  const std::size_t n_uniform = std::min(k - n_top, slice(cfg_.uniform_fraction));
  const std::size_t n_invalid = k - n_top - n_uniform;

  std::uniform_int_distribution<std::size_t> any(0, records_.size() - 1);
  std::vector<const ModelRecord*> out;
  out.reserve(k);

  const auto ranked = ranked_valid();
  for (std::size_t i = 0; i < n_top && i < ranked.size(); ++i) out.push_back(ranked[i]);

  for (std::size_t i = 0; i < n_uniform; ++i) out.push_back(&records_[any(rng)]);

  std::size_t taken = 0;
  for (auto it = records_.rbegin(); it != records_.rend() && taken < n_invalid; ++it) {
    if (it->invalid()) {
      out.push_back(&*it);
      ++taken;
    }
  }

  while (out.size() < k) out.push_back(&records_[any(rng)]);
  out.resize(k);
  return out;
}

std::vector<Experience> MemoryBuffer::sample_batch(std::size_t k, nn::Rng& rng) const {
  std::vector<Experience> out;
  for (const ModelRecord* r : sample_records(k, rng)) {
    out.insert(out.end(), r->experiences.begin(), r->experiences.end());
  }
  return out;
}

nlohmann::json MemoryBuffer::to_json() const {
  nlohmann::json j{{"capacity", cfg_.capacity},
                   {"top_fraction", cfg_.top_fraction},
                   {"uniform_fraction", cfg_.uniform_fraction},
                   {"invalid_fraction", cfg_.invalid_fraction},
                   {"records", nlohmann::json::array()}};
  for (const auto& r : records_) j["records"].push_back(r);
  return j;
}

MemoryBuffer MemoryBuffer::from_json(const nlohmann::json& j) {
  ReplayConfig cfg;
  cfg.capacity = j.at("capacity").get<std::size_t>();
  cfg.top_fraction = j.at("top_fraction").get<double>();
  cfg.uniform_fraction = j.at("uniform_fraction").get<double>();
  cfg.invalid_fraction = j.at("invalid_fraction").get<double>();
  MemoryBuffer buf(cfg);
  for (const auto& r : j.at("records")) buf.records_.push_back(r.get<ModelRecord>());
  return buf;
}

void record_model(MemoryBuffer& buf, ModelRecord rec) { buf.record_model(std::move(rec)); }

std::vector<Experience> sample_batch(const MemoryBuffer& buf, std::size_t k, nn::Rng& rng) {
  return buf.sample_batch(k, rng);
}

}  // namespace dqnas

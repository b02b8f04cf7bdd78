#include "dqnas/weight_store.hpp"

#include <nlohmann/json.hpp>

#include "dqnas/error.hpp"
#include "io_util.hpp"

namespace dqnas {

namespace fs = std::filesystem;

LayerSignature LayerSignature::from_hex(std::string_view hex) {
  const Blob raw = dqnas::from_hex(hex);
  if (raw.size() != 16) throw ParseError("layer signature must be 32 hex digits");
  LayerSignature s;
  std::copy(raw.begin(), raw.end(), s.bytes.begin());
  return s;
}

LayerSignature layer_signature(const LayerSpec& spec) {
  return LayerSignature{hash128(to_tuple(spec).dump())};
}

std::vector<LayerSignature> signature_path(std::span<const LayerSpec> arch) {
  std::vector<LayerSignature> out;
  out.reserve(arch.size());
  for (const auto& l : arch) out.push_back(layer_signature(l));
  return out;
}

bool WeightStore::better(std::size_t a, std::size_t b) const {
  const PrefixEntry& x = entries_[a];
  const PrefixEntry& y = entries_[b];
  if (x.source_reward != y.source_reward) return x.source_reward > y.source_reward;
  return x.updated_at > y.updated_at;
}

void WeightStore::insert_path(std::size_t entry) {
  std::size_t node = 0;
  nodes_[0].entries.push_back(entry);
  for (const LayerSignature& sig : entries_[entry].path) {
    auto it = nodes_[node].children.find(sig);
    if (it == nodes_[node].children.end()) {
      nodes_.push_back(Node{});
      it = nodes_[node].children.emplace(sig, nodes_.size() - 1).first;
    }
    node = it->second;
    nodes_[node].entries.push_back(entry);
  }
}

PrefixMatch WeightStore::longest_prefix_match(std::span<const LayerSignature> path) const {
  std::size_t node = 0;
  std::size_t depth = 0;
  for (const LayerSignature& sig : path) {
    auto it = nodes_[node].children.find(sig);
    if (it == nodes_[node].children.end()) break;
    node = it->second;
    ++depth;
  }
  if (depth == 0) return {};

  const auto& candidates = nodes_[node].entries;
  std::size_t best = candidates.front();
  for (std::size_t e : candidates) {
    if (better(e, best)) best = e;
  }
  const auto& blobs = entries_[best].blobs;
  return PrefixMatch{depth, std::vector<Blob>(blobs.begin(), blobs.begin() + static_cast<std::ptrdiff_t>(depth))};
}

PrefixMatch WeightStore::longest_prefix_match(std::span<const LayerSpec> arch) const {
  return longest_prefix_match(signature_path(arch));
}

void WeightStore::store_prefix_weights(std::span<const LayerSpec> arch, std::vector<Blob> blobs,
                                       double reward) {
  if (blobs.size() != arch.size()) {
    throw BlobArityMismatch("got " + std::to_string(blobs.size()) + " blobs for " +
                            std::to_string(arch.size()) + " layers");
  }
  auto path = signature_path(arch);
  ++writes_;
  if (auto it = by_path_.find(path); it != by_path_.end()) {
    PrefixEntry& e = entries_[it->second];
    e.blobs = std::move(blobs);
    e.source_reward = reward;
    e.updated_at = ++clock_;
    return;
  }
  entries_.push_back(PrefixEntry{path, std::move(blobs), reward, ++clock_});
  by_path_.emplace(std::move(path), entries_.size() - 1);
  insert_path(entries_.size() - 1);
}

void WeightStore::save(const fs::path& dir) const {
  fs::create_directories(dir / "blobs");
  nlohmann::json index{{"version", 1}, {"clock", clock_}, {"writes", writes_}};
  index["entries"] = nlohmann::json::array();
  for (const PrefixEntry& e : entries_) {
    nlohmann::json path = nlohmann::json::array();
    for (const auto& s : e.path) path.push_back(s.hex());
    nlohmann::json blobs = nlohmann::json::array();
    for (const Blob& b : e.blobs) {
      if (b.empty()) {
        blobs.push_back(nullptr);
        continue;
      }
      const std::string name = to_hex(hash128(b));
      const fs::path file = dir / "blobs" / name;
      if (!fs::exists(file)) detail::write_file_atomic(file, b);  // content-addressed, append-only
      blobs.push_back(name);
    }
    index["entries"].push_back({{"path", path},
                                {"blobs", blobs},
                                {"source_reward", e.source_reward},
                                {"updated_at", e.updated_at}});
  }
  detail::write_text_atomic(dir / "weights-index.json", index.dump(1));
}

WeightStore WeightStore::load(const fs::path& dir) {
  WeightStore store;
  try {
    const auto index = nlohmann::json::parse(detail::read_text(dir / "weights-index.json"));
    if (index.at("version").get<int>() != 1) throw VersionMismatch("unsupported weight index version");
    for (const auto& je : index.at("entries")) {
      PrefixEntry e;
      for (const auto& s : je.at("path")) e.path.push_back(LayerSignature::from_hex(s.get<std::string>()));
      for (const auto& b : je.at("blobs")) {
        if (b.is_null()) {
          e.blobs.emplace_back();
          continue;
        }
        Blob data = detail::read_file(dir / "blobs" / b.get<std::string>());
        if (to_hex(hash128(data)) != b.get<std::string>()) {
          throw CorruptCheckpoint("weight blob " + b.get<std::string>() + " fails its hash");
        }
        e.blobs.push_back(std::move(data));
      }
      if (e.blobs.size() != e.path.size()) throw CorruptCheckpoint("weight index entry arity mismatch");
      e.source_reward = je.at("source_reward").get<double>();
      e.updated_at = je.at("updated_at").get<std::uint64_t>();
      store.entries_.push_back(std::move(e));
      store.by_path_.emplace(store.entries_.back().path, store.entries_.size() - 1);
      store.insert_path(store.entries_.size() - 1);
    }
    store.clock_ = index.at("clock").get<std::uint64_t>();
    store.writes_ = index.at("writes").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed weight index: ") + e.what());
  }
  return store;
}

PrefixMatch longest_prefix_match(const WeightStore& store, std::span<const LayerSpec> arch) {
  return store.longest_prefix_match(arch);
}

void store_prefix_weights(WeightStore& store, std::span<const LayerSpec> arch,
                          std::vector<Blob> blobs, double reward) {
  store.store_prefix_weights(arch, std::move(blobs), reward);
}

}  // namespace dqnas

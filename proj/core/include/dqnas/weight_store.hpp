#pragma once

// One-shot weight transfer: trained per-layer weight blobs keyed by the signature
// path of the architecture that produced them. New architectures warm-start from
// the longest stored prefix they share.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dqnas/hashing.hpp"
#include "dqnas/search_space.hpp"

namespace dqnas {

/// 128-bit content hash of a layer's canonical tuple form.
struct LayerSignature {
  Digest128 bytes{};

  std::string hex() const { return to_hex(bytes); }
  static LayerSignature from_hex(std::string_view hex);
  auto operator<=>(const LayerSignature&) const = default;
};

LayerSignature layer_signature(const LayerSpec& spec);
std::vector<LayerSignature> signature_path(std::span<const LayerSpec> arch);

struct PrefixEntry {
  std::vector<LayerSignature> path;
  std::vector<Blob> blobs;  // one per layer; empty for parameterless layers
  double source_reward = 0.0;
  std::uint64_t updated_at = 0;
};

struct PrefixMatch {
  std::size_t match_len = 0;
  std::vector<Blob> blobs;  // blobs of the first match_len layers
};

class WeightStore {
 public:
  WeightStore() = default;

  /// Longest L such that the first L signatures equal those of some entry. Among
  /// entries reaching L the highest source_reward wins, then the most recent.
  PrefixMatch longest_prefix_match(std::span<const LayerSignature> path) const;
  PrefixMatch longest_prefix_match(std::span<const LayerSpec> arch) const;

  /// Inserts or overwrites (last writer wins) the entry for arch's full path.
  /// Throws BlobArityMismatch.
  void store_prefix_weights(std::span<const LayerSpec> arch, std::vector<Blob> blobs,
                            double reward);

  std::span<const PrefixEntry> entries() const { return entries_; }
  std::size_t write_count() const { return writes_; }

  /// Blob files named by content hash under `dir/blobs/`, index at
  /// `dir/weights-index.json` (written to a temp file, then renamed).
  void save(const std::filesystem::path& dir) const;
  static WeightStore load(const std::filesystem::path& dir);

 private:
  struct Node {
    std::map<LayerSignature, std::size_t> children;
    std::vector<std::size_t> entries;  // entries whose path passes through this node
  };

  void insert_path(std::size_t entry);
  bool better(std::size_t a, std::size_t b) const;

  std::vector<PrefixEntry> entries_;
  std::map<std::vector<LayerSignature>, std::size_t> by_path_;
  std::vector<Node> nodes_{Node{}};
  std::uint64_t clock_ = 0;
  std::uint64_t writes_ = 0;
};

PrefixMatch longest_prefix_match(const WeightStore& store, std::span<const LayerSpec> arch);
void store_prefix_weights(WeightStore& store, std::span<const LayerSpec> arch,
                          std::vector<Blob> blobs, double reward);

}  // namespace dqnas

#pragma once

// Structural rules for a valid layer sequence, applied incrementally while a
// sequence is sampled and over a whole architecture afterwards.
//
//   R1  the first layer is a convolution
//   R2  no convolution or pooling after Flatten
//   R3  the last layer is the output layer (softmax for > 2 classes, else sigmoid)
//   R4  Dropout only immediately after a pooling layer
//   R5  no Dense before Flatten
//   R6  exactly one Flatten; Terminate only after Flatten and only as the last sampled token

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dqnas/search_space.hpp"

namespace dqnas {

struct PrefixState {
  std::optional<LayerKind> last_kind;
  bool seen_flatten = false;
  bool last_was_pooling = false;
  bool terminated = false;
  std::size_t depth = 0;
  std::size_t max_depth = 8;

  /// State after appending a layer of `kind`.
  PrefixState advance(LayerKind kind) const;

  bool operator==(const PrefixState&) const = default;
};

void to_json(nlohmann::json& j, const PrefixState& s);
void from_json(const nlohmann::json& j, PrefixState& s);

/// Whether a layer of `kind` may be appended in state `st`.
bool kind_allowed(const PrefixState& st, LayerKind kind);

using ActionMask = std::vector<std::uint8_t>;

/// mask[i] != 0 iff appending decode(i) breaks none of R1-R6.
ActionMask allowed_next_mask(const ActionVocabulary& vocab, const PrefixState& st);

enum class Rule : std::uint8_t { R1 = 1, R2, R3, R4, R5, R6 };
std::string_view to_string(Rule r);

struct RuleViolation {
  Rule rule;
  std::size_t position;
  std::string description;
};

nlohmann::json to_json(const RuleViolation& v);

/// Empty iff `arch` satisfies every rule; violations are sorted by position.
std::vector<RuleViolation> check_sequence(std::span<const LayerSpec> arch, int num_classes);

}  // namespace dqnas

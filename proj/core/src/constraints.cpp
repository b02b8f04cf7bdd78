#include "dqnas/constraints.hpp"

#include <algorithm>

namespace dqnas {

PrefixState PrefixState::advance(LayerKind kind) const {
  PrefixState next = *this;
  next.last_kind = kind;
  next.last_was_pooling = is_pool(kind);
  next.seen_flatten = seen_flatten || kind == LayerKind::Flatten;
  next.terminated = terminated || kind == LayerKind::Terminate;
  if (kind != LayerKind::Terminate) ++next.depth;
  return next;
}

void to_json(nlohmann::json& j, const PrefixState& s) {
  j = nlohmann::json{{"last_kind", s.last_kind ? nlohmann::json(std::string(to_string(*s.last_kind)))
                                               : nlohmann::json(nullptr)},
                     {"seen_flatten", s.seen_flatten},
                     {"last_was_pooling", s.last_was_pooling},
                     {"terminated", s.terminated},
                     {"depth", s.depth},
                     {"max_depth", s.max_depth}};
}

void from_json(const nlohmann::json& j, PrefixState& s) {
  const auto& lk = j.at("last_kind");
  s.last_kind = lk.is_null() ? std::nullopt : std::optional(parse_layer_kind(lk.get<std::string>()));
  s.seen_flatten = j.at("seen_flatten").get<bool>();
  s.last_was_pooling = j.at("last_was_pooling").get<bool>();
  s.terminated = j.at("terminated").get<bool>();
  s.depth = j.at("depth").get<std::size_t>();
  s.max_depth = j.at("max_depth").get<std::size_t>();
}

bool kind_allowed(const PrefixState& st, LayerKind kind) {
  if (st.terminated || kind == LayerKind::OutputDense) return false;
  if (!st.last_kind) return is_conv(kind);  // R1
  if (is_conv(kind) || is_pool(kind)) return !st.seen_flatten;  // R2
  switch (kind) {
    case LayerKind::Dropout: return st.last_was_pooling;  // R4
    case LayerKind::Dense: return st.seen_flatten;        // R5
    case LayerKind::Flatten: return !st.seen_flatten;     // R6
    case LayerKind::Terminate: return st.seen_flatten;    // R6
    case LayerKind::BatchNorm: return true;
    default: return false;
  }
}

ActionMask allowed_next_mask(const ActionVocabulary& vocab, const PrefixState& st) {
  ActionMask mask(vocab.size(), 0);
  for (LayerKind k : kAllLayerKinds) {
    if (!kind_allowed(st, k)) continue;
    const IndexRange r = vocab.range(k);
    std::fill(mask.begin() + static_cast<std::ptrdiff_t>(r.begin),
              mask.begin() + static_cast<std::ptrdiff_t>(r.end), std::uint8_t{1});
  }
  return mask;
}

std::string_view to_string(Rule r) {
  switch (r) {
    case Rule::R1: return "R1";
    case Rule::R2: return "R2";
    case Rule::R3: return "R3";
    case Rule::R4: return "R4";
    case Rule::R5: return "R5";
    case Rule::R6: return "R6";
  }
  return "R?";
}

nlohmann::json to_json(const RuleViolation& v) {
  return {{"rule", std::string(to_string(v.rule))},
          {"position", v.position},
          {"description", v.description}};
}

std::vector<RuleViolation> check_sequence(std::span<const LayerSpec> arch, int num_classes) {
  std::vector<RuleViolation> out;
  if (arch.empty()) {
    out.push_back({Rule::R1, 0, "empty architecture has no convolutional first layer"});
    return out;
  }
  const std::size_t n = arch.size();
  const std::size_t last = n - 1;
  bool seen_flatten = false;

  for (std::size_t i = 0; i < n; ++i) {
    const LayerKind k = arch[i].kind;
    const std::string name(to_string(k));

    if (i == 0 && !is_conv(k)) out.push_back({Rule::R1, i, "first layer is " + name + ", not a convolution"});
    if ((is_conv(k) || is_pool(k)) && seen_flatten) {
      out.push_back({Rule::R2, i, name + " after Flatten"});
    }
    if (k == LayerKind::OutputDense && i != last) {
      out.push_back({Rule::R3, i, "output layer before the end of the sequence"});
    }
    if (k == LayerKind::Dropout && (i == 0 || !is_pool(arch[i - 1].kind))) {
      out.push_back({Rule::R4, i, "Dropout not immediately after a pooling layer"});
    }
    if (k == LayerKind::Dense && !seen_flatten) {
      out.push_back({Rule::R5, i, "Dense before Flatten"});
    }
    if (k == LayerKind::Flatten && seen_flatten) {
      out.push_back({Rule::R6, i, "second Flatten"});
    }
    if (k == LayerKind::Terminate) {
      if (!seen_flatten) out.push_back({Rule::R6, i, "Terminate before Flatten"});
      if (!(i + 2 == n && arch[last].kind == LayerKind::OutputDense)) {
        out.push_back({Rule::R6, i, "Terminate is not the last sampled token"});
      }
    }
    seen_flatten = seen_flatten || k == LayerKind::Flatten;
  }

  const LayerSpec& tail = arch[last];
  if (tail.kind != LayerKind::OutputDense) {
    out.push_back({Rule::R3, last, "last layer is not the output layer"});
  } else {
    const Activation want = num_classes > 2 ? Activation::Softmax : Activation::Sigmoid;
    if (tail.activation != want) {
      out.push_back({Rule::R3, last, "output activation must be " + std::string(to_string(want))});
    }
    if (tail.units != num_classes) {
      out.push_back({Rule::R3, last, "output width differs from the class count"});
    }
  }
  if (!seen_flatten) out.push_back({Rule::R6, last, "no Flatten layer"});

  std::stable_sort(out.begin(), out.end(),
                   [](const RuleViolation& a, const RuleViolation& b) { return a.position < b.position; });
  return out;
}

}  // namespace dqnas

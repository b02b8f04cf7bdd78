#include "dqnas/search_space.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <sstream>

#include "dqnas/error.hpp"

namespace dqnas {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

struct KindNames {
  LayerKind kind;
  std::string_view config_name;
  std::string_view tuple_tag;
};

constexpr std::array<KindNames, kLayerKindCount> kKindNames = {{
    {LayerKind::Conv2D, "Conv2D", "conv2d"},
    {LayerKind::Conv2DTranspose, "Conv2DTranspose", "conv2dtranspose"},
    {LayerKind::SeparableConv2D, "SeparableConv2D", "separableconv2d"},
    {LayerKind::DepthwiseConv2D, "DepthwiseConv2D", "depthwiseconv2d"},
    {LayerKind::MaxPool2D, "MaxPool2D", "maxpool2d"},
    {LayerKind::AvgPool2D, "AvgPool2D", "avgpool2d"},
    {LayerKind::GlobalMaxPool2D, "GlobalMaxPool2D", "globalmaxpool2d"},
    {LayerKind::GlobalAvgPool2D, "GlobalAvgPool2D", "globalavgpool2d"},
    {LayerKind::Dropout, "Dropout", "dropout"},
    {LayerKind::BatchNorm, "BatchNorm", "BatchNormalization"},
    {LayerKind::Flatten, "Flatten", "Flatten"},
    {LayerKind::Dense, "Dense", "dense"},
    {LayerKind::OutputDense, "OutputDense", "output"},
    {LayerKind::Terminate, "Terminate", "Terminate"},
}};

constexpr Param kConvParams[] = {Param::Filters,    Param::KernelSize, Param::ConvStrides,
                                 Param::Padding,    Param::KernelInit, Param::BiasInit,
                                 Param::Regularizer};
constexpr Param kDepthwiseParams[] = {Param::KernelSize, Param::ConvStrides, Param::Padding,
                                      Param::KernelInit, Param::BiasInit,    Param::Regularizer};
constexpr Param kPoolParams[] = {Param::PoolStrides, Param::Padding, Param::PoolSize};
constexpr Param kGlobalPoolParams[] = {Param::Padding};
constexpr Param kDropoutParams[] = {Param::DropoutRate};
constexpr Param kDenseParams[] = {Param::DenseUnits, Param::Activation};

template <typename T>
std::optional<std::size_t> index_of(const std::vector<T>& domain, const std::optional<T>& v) {
  if (!v) return std::nullopt;
  auto it = std::find(domain.begin(), domain.end(), *v);
  if (it == domain.end()) return std::nullopt;
  return static_cast<std::size_t>(it - domain.begin());
}

template <typename T>
void require_unique_nonempty(const std::vector<T>& values, std::string_view name) {
  if (values.empty()) throw ConfigError("vocabulary list '" + std::string(name) + "' is empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (std::size_t j = i + 1; j < values.size(); ++j) {
      if (values[i] == values[j]) {
        throw ConfigError("vocabulary list '" + std::string(name) + "' has duplicates");
      }
    }
  }
}

void require_positive(const std::vector<int>& values, std::string_view name) {
  for (int v : values) {
    if (v < 1) throw ConfigError("vocabulary list '" + std::string(name) + "' has non-positive value");
  }
}

// Sets field `p` of `spec` to the `ord`-th element of its domain.
void assign(LayerSpec& spec, const VocabularyConfig& cfg, Param p, std::size_t ord) {
  switch (p) {
    case Param::Filters: spec.filters = cfg.filters[ord]; break;
    case Param::KernelSize: spec.kernel_size = cfg.kernel_sizes[ord]; break;
    case Param::ConvStrides: spec.strides = cfg.conv_strides[ord]; break;
    case Param::Padding: spec.padding = cfg.paddings[ord]; break;
    case Param::KernelInit: spec.kernel_init = cfg.kernel_initializers[ord]; break;
    case Param::BiasInit: spec.bias_init = cfg.bias_initializers[ord]; break;
    case Param::Regularizer: spec.regularizer = cfg.regularizers[ord]; break;
    case Param::PoolStrides: spec.strides = cfg.pool_strides[ord]; break;
    case Param::PoolSize: spec.pool_size = cfg.pool_sizes[ord]; break;
    case Param::DropoutRate: spec.dropout_rate = cfg.dropout_rates[ord]; break;
    case Param::DenseUnits: spec.units = cfg.dense_units[ord]; break;
    case Param::Activation: spec.activation = cfg.activations[ord]; break;
  }
}

int get_int(const json& j, std::size_t i) {
  if (!j.at(i).is_number_integer()) throw ParseError("expected integer in layer tuple " + j.dump());
  return j.at(i).get<int>();
}

std::string get_str(const json& j, std::size_t i) {
  if (!j.at(i).is_string()) throw ParseError("expected string in layer tuple " + j.dump());
  return j.at(i).get<std::string>();
}

void expect_arity(const json& j, std::size_t n) {
  if (j.size() != n) throw ParseError("layer tuple has wrong arity: " + j.dump());
}

template <typename E, typename Names>
std::string_view name_of(E e, const Names& names) {
  return names[static_cast<std::size_t>(e)];
}

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
  const std::string needle = lower(s);
  for (std::size_t i = 0; i < N; ++i) {
    if (lower(names[i]) == needle) return static_cast<E>(i);
  }
  throw ParseError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::array<std::string_view, 2> kPaddingNames = {"same", "valid"};
constexpr std::array<std::string_view, 4> kInitNames = {"HeNormal", "HeUniform", "RandomNormal",
                                                        "RandomUniform"};
constexpr std::array<std::string_view, 3> kRegNames = {"l1", "l2", "l1_l2"};
constexpr std::array<std::string_view, 7> kActNames = {"sigmoid", "tanh", "relu", "elu",
                                                       "selu",    "swish", "softmax"};

}  // namespace

std::string_view to_string(LayerKind k) { return kKindNames[ordinal(k)].config_name; }
std::string_view to_string(Padding p) { return name_of(p, kPaddingNames); }
std::string_view to_string(Initializer i) { return name_of(i, kInitNames); }
std::string_view to_string(Regularizer r) { return name_of(r, kRegNames); }
std::string_view to_string(Activation a) { return name_of(a, kActNames); }

LayerKind parse_layer_kind(std::string_view s) {
  const std::string needle = lower(s);
  for (const auto& n : kKindNames) {
    if (lower(n.config_name) == needle || lower(n.tuple_tag) == needle) return n.kind;
  }
  if (needle == "output_dense" || needle == "batchnormalization") {
    return needle == "output_dense" ? LayerKind::OutputDense : LayerKind::BatchNorm;
  }
  throw ParseError("unknown layer kind '" + std::string(s) + "'");
}

Padding parse_padding(std::string_view s) { return parse_enum<Padding>(s, kPaddingNames, "padding"); }
Initializer parse_initializer(std::string_view s) {
  return parse_enum<Initializer>(s, kInitNames, "initializer");
}
Regularizer parse_regularizer(std::string_view s) {
  return parse_enum<Regularizer>(s, kRegNames, "regularizer");
}
Activation parse_activation(std::string_view s) {
  return parse_enum<Activation>(s, kActNames, "activation");
}

LayerSpec LayerSpec::conv(LayerKind kind, int filters, int kernel, int strides, Padding padding,
                          Initializer kernel_init, Initializer bias_init, Regularizer reg) {
  LayerSpec s;
  s.kind = kind;
  s.filters = filters;
  s.kernel_size = kernel;
  s.strides = strides;
  s.padding = padding;
  s.kernel_init = kernel_init;
  s.bias_init = bias_init;
  s.regularizer = reg;
  return s;
}

LayerSpec LayerSpec::depthwise(int kernel, int strides, Padding padding, Initializer kernel_init,
                               Initializer bias_init, Regularizer reg) {
  LayerSpec s;
  s.kind = LayerKind::DepthwiseConv2D;
  s.kernel_size = kernel;
  s.strides = strides;
  s.padding = padding;
  s.kernel_init = kernel_init;
  s.bias_init = bias_init;
  s.regularizer = reg;
  return s;
}

LayerSpec LayerSpec::pool(LayerKind kind, int pool_size, int strides, Padding padding) {
  LayerSpec s;
  s.kind = kind;
  s.pool_size = pool_size;
  s.strides = strides;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::global_pool(LayerKind kind, Padding padding) {
  LayerSpec s;
  s.kind = kind;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.dropout_rate = rate;
  return s;
}

LayerSpec LayerSpec::batch_norm() {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}

LayerSpec LayerSpec::dense(int units, Activation activation) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.units = units;
  s.activation = activation;
  return s;
}

LayerSpec LayerSpec::output(int units, Activation activation) {
  LayerSpec s = dense(units, activation);
  s.kind = LayerKind::OutputDense;
  return s;
}

LayerSpec LayerSpec::terminate() {
  LayerSpec s;
  s.kind = LayerKind::Terminate;
  return s;
}

LayerSpec output_layer_for(int num_classes) {
  return LayerSpec::output(num_classes, num_classes > 2 ? Activation::Softmax : Activation::Sigmoid);
}

json to_tuple(const LayerSpec& s) {
  const auto tag = std::string(kKindNames[ordinal(s.kind)].tuple_tag);
  auto str = [](auto e) { return std::string(to_string(e)); };
  switch (s.kind) {
    case LayerKind::Conv2D:
    case LayerKind::Conv2DTranspose:
    case LayerKind::SeparableConv2D:
      return json::array({tag, s.filters.value(), s.kernel_size.value(), s.strides.value(),
                          str(s.padding.value()), str(s.kernel_init.value()),
                          str(s.bias_init.value()), str(s.regularizer.value())});
    case LayerKind::DepthwiseConv2D:
      return json::array({tag, s.kernel_size.value(), s.strides.value(), str(s.padding.value()),
                          str(s.kernel_init.value()), str(s.bias_init.value()),
                          str(s.regularizer.value())});
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
      return json::array({tag, s.pool_size.value(), s.strides.value(), str(s.padding.value())});
    case LayerKind::GlobalMaxPool2D:
    case LayerKind::GlobalAvgPool2D:
      return json::array({tag, str(s.padding.value_or(Padding::Valid))});
    case LayerKind::Dropout:
      return json::array({tag, s.dropout_rate.value()});
    case LayerKind::Dense:
    case LayerKind::OutputDense:
      return json::array({s.units.value(), str(s.activation.value())});
    case LayerKind::BatchNorm:
    case LayerKind::Flatten:
    case LayerKind::Terminate:
      return tag;
  }
  return tag;
}

LayerSpec layer_from_tuple(const json& j, bool is_last) {
  try {
    if (j.is_string()) {
      const LayerKind k = parse_layer_kind(j.get<std::string>());
      if (k != LayerKind::BatchNorm && k != LayerKind::Flatten && k != LayerKind::Terminate) {
        throw ParseError("layer '" + j.get<std::string>() + "' needs parameters");
      }
      LayerSpec s;
      s.kind = k;
      return s;
    }
    if (!j.is_array() || j.empty()) throw ParseError("layer must be a string or array: " + j.dump());

    if (j[0].is_number()) {
      expect_arity(j, 2);
      const int units = get_int(j, 0);
      const Activation act = parse_activation(get_str(j, 1));
      return is_last ? LayerSpec::output(units, act) : LayerSpec::dense(units, act);
    }

    const LayerKind k = parse_layer_kind(get_str(j, 0));
    switch (k) {
      case LayerKind::Conv2D:
      case LayerKind::Conv2DTranspose:
      case LayerKind::SeparableConv2D:
        expect_arity(j, 8);
        return LayerSpec::conv(k, get_int(j, 1), get_int(j, 2), get_int(j, 3),
                               parse_padding(get_str(j, 4)), parse_initializer(get_str(j, 5)),
                               parse_initializer(get_str(j, 6)), parse_regularizer(get_str(j, 7)));
      case LayerKind::DepthwiseConv2D:
        expect_arity(j, 7);
        return LayerSpec::depthwise(get_int(j, 1), get_int(j, 2), parse_padding(get_str(j, 3)),
                                    parse_initializer(get_str(j, 4)),
                                    parse_initializer(get_str(j, 5)),
                                    parse_regularizer(get_str(j, 6)));
      case LayerKind::MaxPool2D:
      case LayerKind::AvgPool2D:
        expect_arity(j, 4);
        return LayerSpec::pool(k, get_int(j, 1), get_int(j, 2), parse_padding(get_str(j, 3)));
      case LayerKind::GlobalMaxPool2D:
      case LayerKind::GlobalAvgPool2D:
        if (j.size() == 1) return LayerSpec::global_pool(k, Padding::Valid);
        expect_arity(j, 2);
        return LayerSpec::global_pool(k, parse_padding(get_str(j, 1)));
      case LayerKind::Dropout:
        expect_arity(j, 2);
        if (!j[1].is_number()) throw ParseError("dropout rate must be numeric: " + j.dump());
        return LayerSpec::dropout(j[1].get<double>());
      case LayerKind::Dense:
      case LayerKind::OutputDense: {
        expect_arity(j, 3);
        const int units = get_int(j, 1);
        const Activation act = parse_activation(get_str(j, 2));
        return k == LayerKind::Dense ? LayerSpec::dense(units, act) : LayerSpec::output(units, act);
      }
      case LayerKind::BatchNorm:
      case LayerKind::Flatten:
      case LayerKind::Terminate: {
        expect_arity(j, 1);
        LayerSpec s;
        s.kind = k;
        return s;
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed layer tuple: ") + e.what());
  }
  throw ParseError("unreachable layer tuple " + j.dump());
}

json architecture_to_json(std::span<const LayerSpec> arch) {
  json out = json::array();
  for (const auto& l : arch) out.push_back(to_tuple(l));
  return out;
}

std::vector<LayerSpec> architecture_from_json(const json& j) {
  const json& list = (j.is_object() && j.contains("architecture")) ? j.at("architecture") : j;
  if (!list.is_array()) throw ParseError("architecture must be a JSON array");
  std::vector<LayerSpec> out;
  out.reserve(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    out.push_back(layer_from_tuple(list[i], i + 1 == list.size()));
  }
  return out;
}

std::string architecture_to_string(std::span<const LayerSpec> arch) {
  return architecture_to_json(arch).dump();
}

std::span<const Param> params_of(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D:
    case LayerKind::Conv2DTranspose:
    case LayerKind::SeparableConv2D:
      return kConvParams;
    case LayerKind::DepthwiseConv2D:
      return kDepthwiseParams;
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
      return kPoolParams;
    case LayerKind::GlobalMaxPool2D:
    case LayerKind::GlobalAvgPool2D:
      return kGlobalPoolParams;
    case LayerKind::Dropout:
      return kDropoutParams;
    case LayerKind::Dense:
    case LayerKind::OutputDense:
      return kDenseParams;
    case LayerKind::BatchNorm:
    case LayerKind::Flatten:
    case LayerKind::Terminate:
      return {};
  }
  return {};
}

VocabularyConfig::VocabularyConfig() {
  for (LayerKind k : kAllLayerKinds) {
    if (k != LayerKind::OutputDense) kinds.push_back(k);
  }
}

void VocabularyConfig::validate() const {
  require_unique_nonempty(kinds, "kinds");
  if (std::find(kinds.begin(), kinds.end(), LayerKind::OutputDense) != kinds.end()) {
    throw ConfigError("OutputDense is appended by the engine and cannot be a vocabulary kind");
  }
  require_unique_nonempty(filters, "filters");
  require_unique_nonempty(kernel_sizes, "kernel_sizes");
  require_unique_nonempty(conv_strides, "conv_strides");
  require_unique_nonempty(paddings, "paddings");
  require_unique_nonempty(kernel_initializers, "kernel_initializers");
  require_unique_nonempty(bias_initializers, "bias_initializers");
  require_unique_nonempty(regularizers, "regularizers");
  require_unique_nonempty(pool_sizes, "pool_sizes");
  require_unique_nonempty(pool_strides, "pool_strides");
  require_unique_nonempty(dropout_rates, "dropout_rates");
  require_unique_nonempty(dense_units, "dense_units");
  require_unique_nonempty(activations, "activations");
  require_positive(filters, "filters");
  require_positive(kernel_sizes, "kernel_sizes");
  require_positive(conv_strides, "conv_strides");
  require_positive(pool_sizes, "pool_sizes");
  require_positive(pool_strides, "pool_strides");
  require_positive(dense_units, "dense_units");
  for (double r : dropout_rates) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("dropout rates must lie in (0, 1)");
  }
  if (std::find(activations.begin(), activations.end(), Activation::Softmax) != activations.end()) {
    throw ConfigError("softmax is reserved for the output layer");
  }
}

std::size_t VocabularyConfig::domain_size(Param p) const {
  switch (p) {
    case Param::Filters: return filters.size();
    case Param::KernelSize: return kernel_sizes.size();
    case Param::ConvStrides: return conv_strides.size();
    case Param::Padding: return paddings.size();
    case Param::KernelInit: return kernel_initializers.size();
    case Param::BiasInit: return bias_initializers.size();
    case Param::Regularizer: return regularizers.size();
    case Param::PoolStrides: return pool_strides.size();
    case Param::PoolSize: return pool_sizes.size();
    case Param::DropoutRate: return dropout_rates.size();
    case Param::DenseUnits: return dense_units.size();
    case Param::Activation: return activations.size();
  }
  return 0;
}

bool VocabularyConfig::kind_enabled(LayerKind k) const {
  return std::find(kinds.begin(), kinds.end(), k) != kinds.end();
}

namespace {

template <typename E>
json enum_list(const std::vector<E>& v) {
  json out = json::array();
  for (E e : v) out.push_back(std::string(to_string(e)));
  return out;
}

template <typename E, typename F>
std::vector<E> parse_list(const json& j, F parse) {
  if (!j.is_array()) throw ConfigError("expected a JSON array, got " + j.dump());
  std::vector<E> out;
  for (const auto& v : j) out.push_back(parse(v.get<std::string>()));
  return out;
}

}  // namespace

void to_json(json& j, const VocabularyConfig& cfg) {
  j = json{{"kinds", enum_list(cfg.kinds)},
           {"filters", cfg.filters},
           {"kernel_sizes", cfg.kernel_sizes},
           {"conv_strides", cfg.conv_strides},
           {"paddings", enum_list(cfg.paddings)},
           {"kernel_initializers", enum_list(cfg.kernel_initializers)},
           {"bias_initializers", enum_list(cfg.bias_initializers)},
           {"regularizers", enum_list(cfg.regularizers)},
           {"pool_sizes", cfg.pool_sizes},
           {"pool_strides", cfg.pool_strides},
           {"dropout_rates", cfg.dropout_rates},
           {"dense_units", cfg.dense_units},
           {"activations", enum_list(cfg.activations)}};
}

void from_json(const json& j, VocabularyConfig& cfg) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& key = it.key();
      const json& v = it.value();
      if (key == "kinds") cfg.kinds = parse_list<LayerKind>(v, parse_layer_kind);
      else if (key == "filters") cfg.filters = v.get<std::vector<int>>();
      else if (key == "kernel_sizes") cfg.kernel_sizes = v.get<std::vector<int>>();
      else if (key == "conv_strides") cfg.conv_strides = v.get<std::vector<int>>();
      else if (key == "paddings") cfg.paddings = parse_list<Padding>(v, parse_padding);
      else if (key == "kernel_initializers")
        cfg.kernel_initializers = parse_list<Initializer>(v, parse_initializer);
      else if (key == "bias_initializers")
        cfg.bias_initializers = parse_list<Initializer>(v, parse_initializer);
      else if (key == "regularizers") cfg.regularizers = parse_list<Regularizer>(v, parse_regularizer);
      else if (key == "pool_sizes") cfg.pool_sizes = v.get<std::vector<int>>();
      else if (key == "pool_strides") cfg.pool_strides = v.get<std::vector<int>>();
      else if (key == "dropout_rates") cfg.dropout_rates = v.get<std::vector<double>>();
      else if (key == "dense_units") cfg.dense_units = v.get<std::vector<int>>();
      else if (key == "activations") cfg.activations = parse_list<Activation>(v, parse_activation);
      else throw ConfigError("unknown vocabulary key '" + key + "'");
    }
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed vocabulary config: ") + e.what());
  }
}

ActionVocabulary::ActionVocabulary(VocabularyConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (LayerKind kind : kAllLayerKinds) {
    IndexRange& r = ranges_[ordinal(kind)];
    r.begin = r.end = entries_.size();
    if (!cfg_.kind_enabled(kind)) continue;

    const auto params = params_of(kind);
    std::size_t count = 1;
    for (Param p : params) count *= cfg_.domain_size(p);

    for (std::size_t flat = 0; flat < count; ++flat) {
      LayerSpec spec;
      spec.kind = kind;
      // First declared parameter is the most significant digit.
      std::size_t rest = flat;
      for (std::size_t i = params.size(); i-- > 0;) {
        const std::size_t radix = cfg_.domain_size(params[i]);
        assign(spec, cfg_, params[i], rest % radix);
        rest /= radix;
      }
      entries_.push_back(spec);
    }
    r.end = entries_.size();
  }
}

const LayerSpec& ActionVocabulary::decode(std::size_t index) const {
  if (index >= entries_.size()) {
    throw IndexOutOfRange("action index " + std::to_string(index) + " outside vocabulary of size " +
                          std::to_string(entries_.size()));
  }
  return entries_[index];
}

std::optional<std::size_t> ActionVocabulary::param_ordinal(const LayerSpec& s, Param p) const {
  switch (p) {
    case Param::Filters: return index_of(cfg_.filters, s.filters);
    case Param::KernelSize: return index_of(cfg_.kernel_sizes, s.kernel_size);
    case Param::ConvStrides: return index_of(cfg_.conv_strides, s.strides);
    case Param::Padding: return index_of(cfg_.paddings, s.padding);
    case Param::KernelInit: return index_of(cfg_.kernel_initializers, s.kernel_init);
    case Param::BiasInit: return index_of(cfg_.bias_initializers, s.bias_init);
    case Param::Regularizer: return index_of(cfg_.regularizers, s.regularizer);
    case Param::PoolStrides: return index_of(cfg_.pool_strides, s.strides);
    case Param::PoolSize: return index_of(cfg_.pool_sizes, s.pool_size);
    case Param::DropoutRate: return index_of(cfg_.dropout_rates, s.dropout_rate);
    case Param::DenseUnits: return index_of(cfg_.dense_units, s.units);
    case Param::Activation: return index_of(cfg_.activations, s.activation);
  }
  return std::nullopt;
}

std::optional<std::size_t> ActionVocabulary::find(const LayerSpec& spec) const {
  const IndexRange r = range(spec.kind);
  if (r.empty()) return std::nullopt;
  std::size_t flat = 0;
  for (Param p : params_of(spec.kind)) {
    const auto ord = param_ordinal(spec, p);
    if (!ord) return std::nullopt;
    flat = flat * cfg_.domain_size(p) + *ord;
  }
  const std::size_t index = r.begin + flat;
  // Rejects specs carrying fields their kind does not own.
  if (entries_[index] != spec) return std::nullopt;
  return index;
}

std::size_t ActionVocabulary::encode(const LayerSpec& spec) const {
  if (auto idx = find(spec)) return *idx;
  std::string shown;
  try {
    shown = to_tuple(spec).dump();
  } catch (const std::bad_optional_access&) {
    shown = std::string(to_string(spec.kind)) + " with missing fields";
  }
  throw UnknownSpec("layer spec not in vocabulary: " + shown);
}

ActionVocabulary build_vocabulary(const VocabularyConfig& cfg) { return ActionVocabulary(cfg); }

std::size_t encode_action(const ActionVocabulary& vocab, const LayerSpec& spec) {
  return vocab.encode(spec);
}

LayerSpec decode_action(const ActionVocabulary& vocab, std::size_t index) {
  return vocab.decode(index);
}

}  // namespace dqnas

#include <bit>
#include <cstring>
#include <sstream>

#include "dqnas/error.hpp"
#include "dqnas/search_loop.hpp"
#include "io_util.hpp"

namespace dqnas {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;
constexpr char kControllerMagic[8] = {'D', 'Q', 'N', 'A', 'S', 'C', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes little-endian");

void put_u64(Blob& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t& off) {
  if (off + 8 > in.size()) throw CorruptCheckpoint("controller.bin is truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[off + i]) << (8 * i);
  off += 8;
  return v;
}

void put_doubles(Blob& out, const std::vector<double>& v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
  out.insert(out.end(), p, p + v.size() * sizeof(double));
}

std::vector<double> get_doubles(std::span<const std::uint8_t> in, std::size_t& off, std::size_t n) {
  if (off + n * sizeof(double) > in.size()) throw CorruptCheckpoint("controller.bin is truncated");
  std::vector<double> v(n);
  std::memcpy(v.data(), in.data() + off, n * sizeof(double));
  off += n * sizeof(double);
  return v;
}

Blob get_bytes(std::span<const std::uint8_t> in, std::size_t& off, std::size_t n) {
  if (off + n > in.size()) throw CorruptCheckpoint("controller.bin is truncated");
  Blob b(in.begin() + static_cast<std::ptrdiff_t>(off), in.begin() + static_cast<std::ptrdiff_t>(off + n));
  off += n;
  return b;
}

// Magic, u64 header length, JSON header, main blob, target blob, Adam m and v.
Blob serialize_controller(const ControllerState& cs) {
  const Blob main = cs.main.serialize();
  const Blob target = cs.target.serialize();
  const json header{{"main_bytes", main.size()},
                    {"target_bytes", target.size()},
                    {"adam_size", cs.optimizer.m.size()},
                    {"adam_step", cs.optimizer.step},
                    {"learning_rate", cs.optimizer.learning_rate},
                    {"beta1", cs.optimizer.beta1},
                    {"beta2", cs.optimizer.beta2},
                    {"epsilon", cs.optimizer.epsilon},
                    {"epochs_since_sync", cs.epochs_since_sync},
                    {"rng_seed", cs.rng_seed}};
  const std::string h = header.dump();
  Blob out(std::begin(kControllerMagic), std::end(kControllerMagic));
  put_u64(out, h.size());
  out.insert(out.end(), h.begin(), h.end());
  out.insert(out.end(), main.begin(), main.end());
  out.insert(out.end(), target.begin(), target.end());
  put_doubles(out, cs.optimizer.m);
  put_doubles(out, cs.optimizer.v);
  return out;
}

void deserialize_controller(std::span<const std::uint8_t> in, ControllerState& cs) {
  if (in.size() < 8 || std::memcmp(in.data(), kControllerMagic, 8) != 0) {
    throw CorruptCheckpoint("controller.bin has a bad magic number");
  }
  std::size_t off = 8;
  const std::size_t hlen = get_u64(in, off);
  const Blob hb = get_bytes(in, off, hlen);
  const json header = json::parse(hb.begin(), hb.end());
  cs.main = nn::QNetParams::deserialize(get_bytes(in, off, header.at("main_bytes").get<std::size_t>()));
  cs.target = nn::QNetParams::deserialize(get_bytes(in, off, header.at("target_bytes").get<std::size_t>()));
  const auto n = header.at("adam_size").get<std::size_t>();
  cs.optimizer.m = get_doubles(in, off, n);
  cs.optimizer.v = get_doubles(in, off, n);
  cs.optimizer.step = header.at("adam_step").get<std::uint64_t>();
  cs.optimizer.learning_rate = header.at("learning_rate").get<double>();
  cs.optimizer.beta1 = header.at("beta1").get<double>();
  cs.optimizer.beta2 = header.at("beta2").get<double>();
  cs.optimizer.epsilon = header.at("epsilon").get<double>();
  cs.epochs_since_sync = header.at("epochs_since_sync").get<std::size_t>();
  cs.rng_seed = header.at("rng_seed").get<std::uint64_t>();
  if (off != in.size()) throw CorruptCheckpoint("controller.bin has trailing bytes");
}

std::string rng_text(const nn::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_text(nn::Rng& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw CorruptCheckpoint("rng.json holds an unreadable generator state");
}

void write_tracked(const fs::path& dir, const std::string& name, std::span<const std::uint8_t> bytes,
                   json& files) {
  detail::write_file_atomic(dir / name, bytes);
  files[name] = to_hex(hash128(bytes));
}

void write_tracked_json(const fs::path& dir, const std::string& name, const json& doc, json& files) {
  const std::string text = doc.dump(1);
  write_tracked(dir, name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()),
                files);
}

}  // namespace

void SearchEngine::save_checkpoint(const fs::path& dir) const {
  fs::create_directories(dir);
  json files = json::object();

  write_tracked_json(dir, "config.json", json(cfg_), files);
  write_tracked(dir, "controller.bin", serialize_controller(cs_), files);
  write_tracked_json(dir, "buffer.json", buffer_.to_json(), files);
  write_tracked_json(dir, "policy.json",
                     json{{"epsilon", cs_.policy.epsilon},
                          {"decay", cs_.policy.decay},
                          {"epsilon_min", cs_.policy.epsilon_min},
                          {"random_actions", cs_.policy.random_actions},
                          {"current_epsilon", cs_.policy.current_epsilon()}},
                     files);
  write_tracked_json(dir, "rng.json",
                     json{{"selection", rng_text(rng_)}, {"dropout", rng_text(train_rng_)}}, files);

  SearchReport h;
  h.models = history_;
  h.epochs = epoch_history_;
  json history = h.to_json(0, true);
  history["epoch"] = epoch_;
  history["evaluator_calls"] = evaluator_calls_;
  write_tracked_json(dir, "history.json", history, files);

  store_.save(dir);
  files["weights-index.json"] = to_hex(hash128(detail::read_file(dir / "weights-index.json")));

  const json manifest{{"format", "dqnas-checkpoint"},
                      {"version", kCheckpointVersion},
                      {"epoch", epoch_},
                      {"files", files}};
  detail::write_text_atomic(dir / "manifest.json", manifest.dump(1));
}

SearchEngine SearchEngine::load_checkpoint(const fs::path& dir, EvaluatorFactory factory) {
  json manifest;
  try {
    manifest = json::parse(detail::read_text(dir / "manifest.json"));
  } catch (const IoError& e) {
    throw CorruptCheckpoint(std::string("no readable manifest: ") + e.what());
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("manifest.json is malformed: ") + e.what());
  }

  try {
    if (manifest.at("format") != "dqnas-checkpoint") throw CorruptCheckpoint("not a dqnas checkpoint");
    if (manifest.at("version").get<int>() != kCheckpointVersion) {
      throw VersionMismatch("checkpoint version " + manifest.at("version").dump() + ", expected " +
                            std::to_string(kCheckpointVersion));
    }

    std::map<std::string, Blob> contents;
    for (const char* name : {"config.json", "controller.bin", "buffer.json", "policy.json", "rng.json",
                             "history.json", "weights-index.json"}) {
      const auto& files = manifest.at("files");
      if (!files.contains(name)) throw CorruptCheckpoint(std::string("manifest omits ") + name);
      Blob bytes;
      try {
        bytes = detail::read_file(dir / name);
      } catch (const IoError& e) {
        throw CorruptCheckpoint(e.what());
      }
      if (to_hex(hash128(bytes)) != files.at(name).get<std::string>()) {
        throw CorruptCheckpoint(std::string(name) + " does not match its recorded hash");
      }
      contents[name] = std::move(bytes);
    }
    const auto doc = [&](const char* name) {
      const Blob& b = contents.at(name);
      return json::parse(b.begin(), b.end());
    };

    SearchEngine engine(config_from_json(doc("config.json")), std::move(factory));
    deserialize_controller(contents.at("controller.bin"), engine.cs_);
    if (engine.cs_.main.shape().output_width != engine.vocab_->size()) {
      throw CorruptCheckpoint("controller width does not match the configured vocabulary");
    }
    engine.buffer_ = MemoryBuffer::from_json(doc("buffer.json"));
    const json policy = doc("policy.json");
    engine.cs_.policy = {policy.at("epsilon").get<double>(), policy.at("decay").get<double>(),
                         policy.at("epsilon_min").get<double>(),
                         policy.at("random_actions").get<std::uint64_t>()};
    const json rng = doc("rng.json");
    rng_from_text(engine.rng_, rng.at("selection").get<std::string>());
    rng_from_text(engine.train_rng_, rng.at("dropout").get<std::string>());
    const json history = doc("history.json");
    const SearchReport h = SearchReport::from_json(history);
    engine.history_ = h.models;
    engine.epoch_history_ = h.epochs;
    engine.epoch_ = history.at("epoch").get<std::size_t>();
    engine.evaluator_calls_ = history.at("evaluator_calls").get<std::size_t>();
    engine.store_ = WeightStore::load(dir);
    return engine;
  } catch (const json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed checkpoint: ") + e.what());
  } catch (const ParseError& e) {
    throw CorruptCheckpoint(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(std::string("checkpoint config is invalid: ") + e.what());
  }
}

}  // namespace dqnas

#include "dqnas/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dqnas/constraints.hpp"
#include "dqnas/error.hpp"
#include "dqnas/evaluation.hpp"
#include "dqnas/search_config.hpp"
#include "dqnas/search_loop.hpp"
#include "dqnas/shape_engine.hpp"

namespace dqnas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

class SignalGuard {
 public:
  SignalGuard() {
    g_stop.store(false);
    struct sigaction sa{};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGINT, &sa, &old_int_);
    sigaction(SIGTERM, &sa, &old_term_);
  }
  ~SignalGuard() {
    sigaction(SIGINT, &old_int_, nullptr);
    sigaction(SIGTERM, &old_term_, nullptr);
  }

 private:
  struct sigaction old_int_{};
  struct sigaction old_term_{};
};

// Input problems the user can fix by changing the command line or its files.
class UsageError : public Error {
 public:
  using Error::Error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("cannot parse " + path + ": " + e.what());
  }
}

std::vector<LayerSpec> read_architecture(const std::string& path) {
  try {
    return architecture_from_json(read_json(path));
  } catch (const ParseError& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const UnknownSpec& e) {
    throw UsageError(path + ": " + e.what());
  }
}

TensorShape read_shape(const std::string& text) {
  try {
    return parse_shape(text);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

void write_output(const json& doc, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << doc.dump(2) << "\n";
    return;
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << doc.dump(2) << "\n";
}

bool same_search(SearchConfig a, SearchConfig b) {
  a.output_dir = b.output_dir;
  a.evaluator.command = b.evaluator.command;
  return a == b;
}

struct SearchArgs {
  std::string config;
  std::string resume;
  std::vector<std::string> overrides;
  std::string output;
  std::string worker_cmd;
};

int cmd_search(const SearchArgs& a, std::ostream& out, std::ostream& err) {
  SearchConfig cfg;
  try {
    cfg = apply_overrides(load_config(a.config), a.overrides);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (!a.output.empty()) cfg.output_dir = a.output;
  if (!a.worker_cmd.empty()) {
    cfg.evaluator.command = a.worker_cmd;
  } else if (const char* env = std::getenv("DQNAS_WORKER_CMD"); env != nullptr && cfg.evaluator.command.empty()) {
    cfg.evaluator.command = env;
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  const fs::path outdir = cfg.output_dir;
  const fs::path ckpt = outdir / "checkpoint";
  fs::create_directories(outdir);

  std::optional<SearchEngine> engine;
  if (!a.resume.empty()) {
    engine.emplace(SearchEngine::load_checkpoint(a.resume, default_evaluator_factory(cfg)));
    if (!same_search(engine->config(), cfg)) {
      throw UsageError("checkpoint " + a.resume + " was written with a different configuration");
    }
    err << "resuming at controller epoch " << engine->epoch() << " of " << cfg.controller_epochs << "\n";
  } else {
    engine.emplace(cfg);
  }

  SearchReport report;
  int code = kExitOk;
  {
    SignalGuard guard;
    try {
      report = engine->run(&g_stop, ckpt);
    } catch (const EvaluatorUnavailable& e) {
      err << "error: " << e.what() << "\ncheckpoint kept at " << ckpt.string() << "\n";
      report = engine->report();
      code = kExitRuntime;
    }
    if (g_stop.load()) {
      err << "interrupted; checkpoint at " << ckpt.string() << " (epoch " << engine->epoch() << ")\n";
      code = kExitRuntime;
    }
  }

  write_output(report.to_json(cfg.report_top_k), (outdir / "report.json").string(), out);
  write_metrics_csv(report, outdir / "metrics.csv");
  if (code == kExitOk) {
    json summary{{"models", report.models.size()},
                 {"output_dir", outdir.string()},
                 {"best", report.to_json(1)["best"]}};
    out << summary.dump(2) << "\n";
  }
  return code;
}

int cmd_validate(const std::string& arch_path, const std::string& input, int classes,
                 std::ostream& out) {
  const auto arch = read_architecture(arch_path);
  const TensorShape shape = read_shape(input);
  json j = to_json(validate_architecture(arch, shape));
  j["violations"] = json::array();
  for (const auto& v : check_sequence(arch, classes)) j["violations"].push_back(to_json(v));
  if (!j["violations"].empty()) j["valid"] = false;
  out << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_export(const std::string& report_path, std::size_t top, const std::string& format,
               const std::string& output, std::ostream& out) {
  if (format != "spec-json") throw UsageError("unsupported export format '" + format + "'");
  SearchReport report;
  try {
    report = SearchReport::from_json(read_json(report_path));
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
  json arr = json::array();
  const auto ranking = report.ranking();
  for (std::size_t i = 0; i < std::min(top, ranking.size()); ++i) {
    const ModelSummary& m = report.models[ranking[i]];
    arr.push_back({{"id", "model-" + std::to_string(m.index)},
                   {"rank", i + 1},
                   {"reward", m.reward},
                   {"architecture", architecture_to_json(m.architecture)}});
  }
  write_output(arr, output, out);
  return kExitOk;
}

int cmd_replay_top(const std::string& checkpoint, std::size_t top, std::ostream& out) {
  const fs::path file = fs::path(checkpoint) / "buffer.json";
  if (!fs::exists(file)) throw UsageError("no buffer.json under " + checkpoint);
  const MemoryBuffer buf = MemoryBuffer::from_json(read_json(file.string()));
  json arr = json::array();
  const auto ranked = buf.ranked_valid();
  for (std::size_t i = 0; i < std::min(top, ranked.size()); ++i) {
    const ModelRecord& r = *ranked[i];
    arr.push_back({{"rank", i + 1},
                   {"insertion_ordinal", r.insertion_ordinal},
                   {"reward", r.reward},
                   {"sequence", r.sequence},
                   {"architecture", architecture_to_json(r.architecture)}});
  }
  out << arr.dump(2) << "\n";
  return kExitOk;
}

int cmd_surrogate_eval(const std::string& arch_path, std::uint64_t seed, const std::string& input,
                       std::ostream& out) {
  const auto arch = read_architecture(arch_path);
  const TensorShape shape = read_shape(input);
  EvaluationResult res;
  try {
    res = surrogate_evaluate(arch, seed, shape, std::span<const TrainingCombo>(all_training_combos()).first(1));
  } catch (const InvalidArchitecture& e) {
    throw UsageError(e.what());
  }
  json j{{"score", res.best_val_accuracy},
         {"parameter_count", res.parameter_count},
         {"structural", surrogate_structural_score(arch, res.parameter_count)},
         {"noise", surrogate_noise(arch, seed)},
         {"seed", seed}};
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Double-DQN neural architecture search engine", "dqnas"};
  app.require_subcommand(1);

  SearchArgs search;
  auto* s = app.add_subcommand("search", "Run an architecture search");
  s->add_option("--config", search.config, "Search configuration (JSON)")->required()->check(CLI::ExistingFile);
  s->add_option("--resume", search.resume, "Resume from a checkpoint directory")->check(CLI::ExistingDirectory);
  s->add_option("--set", search.overrides, "Override a configuration key, e.g. policy.epsilon=0.5");
  s->add_option("--output", search.output, "Output directory (overrides output_dir)");
  s->add_option("--worker-cmd", search.worker_cmd,
                "External worker command line (overrides DQNAS_WORKER_CMD)");

  std::string arch;
  std::string input = "28x28x1";
  int classes = 10;
  auto* v = app.add_subcommand("validate", "Check shapes and sequence rules of an architecture");
  v->add_option("--arch", arch, "Architecture file (JSON)")->required()->check(CLI::ExistingFile);
  v->add_option("--input", input, "Input shape HxWxC")->capture_default_str();
  v->add_option("--classes", classes, "Number of output classes")->capture_default_str()->check(CLI::PositiveNumber);

  std::string report_path;
  std::size_t top = 5;
  std::string format = "spec-json";
  std::string output;
  auto* e = app.add_subcommand("export", "Write the top architectures of a report in wire format");
  e->add_option("--report", report_path, "Search report (JSON)")->required()->check(CLI::ExistingFile);
  e->add_option("--top", top, "Number of architectures")->capture_default_str();
  e->add_option("--format", format, "Output format")->capture_default_str()->check(CLI::IsMember({"spec-json"}));
  e->add_option("--output", output, "Output file (default: standard output)");

  std::string checkpoint;
  std::size_t replay_top = 5;
  auto* r = app.add_subcommand("replay-top", "Print the best records of a checkpointed memory buffer");
  r->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  r->add_option("--top", replay_top, "Number of records")->capture_default_str();

  std::string sarch;
  std::uint64_t seed = 0;
  std::string sinput = "28x28x1";
  auto* g = app.add_subcommand("surrogate-eval", "Score an architecture with the surrogate evaluator");
  g->add_option("--arch", sarch, "Architecture file (JSON)")->required()->check(CLI::ExistingFile);
  g->add_option("--seed", seed, "Noise seed")->capture_default_str();
  g->add_option("--input", sinput, "Input shape HxWxC")->capture_default_str();

  std::vector<std::string> argv_storage = args;
  if (argv_storage.empty()) argv_storage.push_back("dqnas");
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const CLI::App* sub : app.get_subcommands()) target = sub;
    out << target->help("", target == &app ? CLI::AppFormatMode::All : CLI::AppFormatMode::Normal);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n" << "run 'dqnas --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (*s) return cmd_search(search, out, err);
    if (*v) return cmd_validate(arch, input, classes, out);
    if (*e) return cmd_export(report_path, top, format, output, out);
    if (*r) return cmd_replay_top(checkpoint, replay_top, out);
    if (*g) return cmd_surrogate_eval(sarch, seed, sinput, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int dispatch(int argc, char** argv) {
  return dispatch(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace dqnas::cli

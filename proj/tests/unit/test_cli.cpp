#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "dqnas/cli.hpp"
#include "dqnas/search_config.hpp"
#include "test_util.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dqnas");
  std::ostringstream out, err;
  const int code = dqnas::cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string write_row1(const testutil::TempDir& dir) {
  const auto path = dir / "row1.json";
  std::ofstream(path) << dqnas::architecture_to_json(testutil::mnist_row1()).dump();
  return path.string();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validate accepts the row-1 architecture") {
  testutil::TempDir dir("cli-validate");
  const Run r = cli({"validate", "--arch", write_row1(dir)});
  REQUIRE(r.code == dqnas::cli::kExitOk);
  const json j = json::parse(r.out);
  CHECK(j["valid"] == true);
  CHECK(j["parameter_count"] == 3631530);
  CHECK(j["violations"].empty());
}

TEST_CASE("validate reports the failing layer") {
  testutil::TempDir dir("cli-invalid");
  std::ofstream(dir / "bad.json")
      << R"([["conv2d", 16, 7, 1, "valid", "HeNormal", "HeNormal", "l1"], ["Flatten"], ["output", 10, "softmax"]])";
  const Run r = cli({"validate", "--arch", (dir / "bad.json").string(), "--input", "5x5x1"});
  REQUIRE(r.code == dqnas::cli::kExitOk);
  const json j = json::parse(r.out);
  CHECK(j["valid"] == false);
  CHECK(j["failing_index"] == 0);
}

TEST_CASE("usage errors exit with 1") {
  testutil::TempDir dir("cli-usage");
  CHECK(cli({}).code == dqnas::cli::kExitUsage);
  CHECK(cli({"search", "--config", (dir / "missing.json").string()}).code == dqnas::cli::kExitUsage);
  CHECK(cli({"validate", "--arch", write_row1(dir), "--input", "28x28"}).code == dqnas::cli::kExitUsage);
  std::ofstream(dir / "junk.json") << "[";
  CHECK(cli({"surrogate-eval", "--arch", (dir / "junk.json").string()}).code == dqnas::cli::kExitUsage);
  std::ofstream(dir / "cfg.json") << R"({"max_layers": 0})";
  CHECK(cli({"search", "--config", (dir / "cfg.json").string()}).code == dqnas::cli::kExitUsage);
}

TEST_CASE("surrogate-eval is deterministic") {
  testutil::TempDir dir("cli-surrogate");
  const std::string arch = write_row1(dir);
  const Run a = cli({"surrogate-eval", "--arch", arch, "--seed", "5"});
  const Run b = cli({"surrogate-eval", "--arch", arch, "--seed", "5"});
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const json j = json::parse(a.out);
  CHECK(j["parameter_count"] == 3631530);
  CHECK(j["score"].get<double>() >= 0.0);
}

TEST_CASE("help text matches the golden file") {
  const Run r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out == slurp(std::filesystem::path(DQNAS_GOLDEN_DIR) / "help.txt"));
}

TEST_CASE("search, export and replay-top") {
  testutil::TempDir dir("cli-search");
  dqnas::SearchConfig cfg = testutil::small_search(3);
  cfg.output_dir = (dir / "run").string();
  std::ofstream(dir / "cfg.json") << json(cfg).dump();

  const Run s = cli({"search", "--config", (dir / "cfg.json").string()});
  REQUIRE(s.code == 0);
  CHECK(json::parse(s.out)["models"] == 12);
  CHECK(std::filesystem::exists(dir / "run" / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "run" / "checkpoint" / "manifest.json"));

  const Run e = cli({"export", "--report", (dir / "run" / "report.json").string(), "--top", "2"});
  REQUIRE(e.code == 0);
  const json exported = json::parse(e.out);
  REQUIRE(exported.size() == 2);
  CHECK(exported[0]["rank"] == 1);
  CHECK(exported[0]["reward"].get<double>() >= exported[1]["reward"].get<double>());
  CHECK_NOTHROW(dqnas::architecture_from_json(exported[0]["architecture"]));

  const Run t = cli({"replay-top", "--checkpoint", (dir / "run" / "checkpoint").string(), "--top", "3"});
  REQUIRE(t.code == 0);
  const json top = json::parse(t.out);
  CHECK(top.size() <= 3);
  if (!top.empty()) CHECK(top[0]["reward"] == exported[0]["reward"]);

  const Run resumed = cli({"search", "--config", (dir / "cfg.json").string(), "--resume",
                           (dir / "run" / "checkpoint").string()});
  CHECK(resumed.code == 0);
}

TEST_CASE("the installed binary maps exit codes") {
  const std::string bin = DQNAS_CLI_BINARY;
  const int ok = std::system((bin + " --help > /dev/null").c_str());
  CHECK(WEXITSTATUS(ok) == 0);
  const int bad = std::system((bin + " validate --arch /nonexistent 2> /dev/null").c_str());
  CHECK(WEXITSTATUS(bad) == 1);
}

}  // TEST_SUITE

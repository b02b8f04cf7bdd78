// Scripted protocol worker. Usage: dqnas_stub_worker [mode] [n]
//
//   echo           answer every request with accuracy 0.5 and one blob per layer
//   bad-best       report a best accuracy that is not the per-combo maximum
//   crash          exit as soon as a request arrives
//   crash-after n  answer n requests, then exit on the next one
//   hang           read requests but never answer
//   error          answer every request with an error message
//   wrong-id       answer with a different request id
//   garbage        answer with a line that is not JSON
//   bad-protocol   announce protocol version 2
//   no-hello       exit before the handshake

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "dqnas/evaluation.hpp"
#include "dqnas/shape_engine.hpp"

namespace {

void send(const nlohmann::json& j) { std::cout << j.dump() << "\n" << std::flush; }

dqnas::EvaluationResult stub_result(const dqnas::EvaluationRequest& req) {
  dqnas::EvaluationResult res;
  res.id = req.id;
  for (const auto& c : req.combos) res.per_combo.push_back({c, 0.5});
  res.best_val_accuracy = 0.5;
  for (std::size_t i = 0; i < req.architecture.size(); ++i) {
    const std::string text = "w" + std::to_string(i) + ":" + std::string(dqnas::to_string(req.architecture[i].kind));
    res.updated_blobs.push_back({i, dqnas::Blob(text.begin(), text.end())});
  }
  try {
    res.parameter_count =
        dqnas::count_parameters(req.architecture, dqnas::dataset_info(req.dataset_id).input_shape);
  } catch (const dqnas::Error&) {
    res.parameter_count = 0;
  }
  return res;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "echo";
  const int budget = argc > 2 ? std::atoi(argv[2]) : 0;

  if (mode == "no-hello") return 3;
  nlohmann::json hello = dqnas::hello_message({"stub"});
  if (mode == "bad-protocol") hello["protocol"] = 2;
  send(hello);

  int answered = 0;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    dqnas::EvaluationRequest req;
    try {
      req = dqnas::parse_request_message(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      send(dqnas::error_message("", e.what()));
      continue;
    }

    if (mode == "crash") return 4;
    if (mode == "crash-after" && answered >= budget) return 4;
    if (mode == "hang") {
      std::this_thread::sleep_for(std::chrono::hours(1));
      return 0;
    }
    if (mode == "error") {
      send(dqnas::error_message(req.id, "stub worker refuses to train"));
      continue;
    }
    if (mode == "garbage") {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }

    nlohmann::json msg = dqnas::result_message(stub_result(req));
    if (mode == "bad-best") msg["best_val_accuracy"] = 0.9;
    if (mode == "wrong-id") msg["id"] = req.id + "-other";
    send(msg);
    ++answered;
  }
  return 0;
}

#pragma once

// Command implementations behind the `taltpp` tool. Each command takes a fully
// validated configuration and writes its artifacts; run_cli() maps argv onto
// them.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "taltpp/event_data.hpp"
#include "taltpp/model.hpp"
#include "taltpp/synth.hpp"
#include "taltpp/training.hpp"

namespace taltpp {

// Everything `train` needs. JSON form is flat; unknown keys are rejected and
// every problem is reported at once.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 42;
  std::string data;  // directory holding train/val/test .jsonl files
  std::string out;   // output directory
  bool force = false;

  nlohmann::json to_json() const;  // without paths or force: the provenance payload
  static RunConfig from_json(const nlohmann::json& j);
};

struct GenConfig {
  std::string preset = "poisson";  // poisson | hawkes
  std::size_t sequences = 500;
  double horizon = 50.0;
  double rate = 1.0;
  HawkesParams hawkes;
  std::size_t types = 1;
  SplitRatios ratios;
  std::uint64_t seed = 42;

  nlohmann::json to_json() const;
  static GenConfig from_json(const nlohmann::json& j);
};

// Deterministic sequences for a generator config (seq ids "seq-000000", ...).
std::vector<EventSequence> generate_sequences(const GenConfig& cfg, std::size_t* resamples = nullptr);

// Writes train/val/test .jsonl and manifest.json into `out`.
void cmd_generate(const GenConfig& cfg, const std::filesystem::path& out, bool force, std::ostream& log);

struct TrainOutcome {
  TrainResult result;
  EvalMetrics test;
  std::string config_hash;
};

// Writes checkpoint.json, vocab.json, history.csv and metrics.json into cfg.out.
TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log);

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  Route route = Route::heads;
  std::size_t mc_samples = 20;
  std::uint64_t seed = 0;
  std::filesystem::path out;  // optional metrics JSON
};

nlohmann::json cmd_eval(const EvalRequest& req, std::ostream& out);

// Shape check for the JSON printed by cmd_eval: every required key present
// with the right type, rates in range. Empty when valid.
std::vector<std::string> eval_metrics_problems(const nlohmann::json& j);

// One JSON line per sequence: the predicted event after its last event.
void cmd_predict(const EvalRequest& req, std::ostream& out);

struct AttnDumpRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  std::vector<std::size_t> sequences{0};
  bool svg = true;
};

// Per sequence, MTBT layer and head: the N x N attention matrix as CSV (and SVG).
// Returns the files written.
std::vector<std::filesystem::path> cmd_attn_dump(const AttnDumpRequest& req, std::ostream& log);

std::string render_heatmap_svg(const Matrix& weights, const std::string& title);

// Flag combinations for every ablation row.
std::string ablation_table();

int run_cli(int argc, char** argv);

}  // namespace taltpp

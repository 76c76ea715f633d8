#include "taltpp/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "taltpp/checkpoint.hpp"
#include "taltpp/kernels.hpp"

namespace fs = std::filesystem;

namespace taltpp {

namespace {

// Reads typed keys out of a flat JSON object, collecting every problem.
class KeyReader {
 public:
  KeyReader(const nlohmann::json& j, std::vector<std::string>& errors) : j_(j), errors_(errors) {}

  template <class T>
  void get(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(std::string("'") + key + "' has the wrong type (" + j_.at(key).dump() + ")");
    }
  }

  template <class E, class Parse>
  void get_enum(const char* key, E& dst, Parse parse) {
    std::string s;
    const std::size_t before = errors_.size();
    get(key, s);
    if (!j_.contains(key) || errors_.size() != before) return;
    try {
      dst = parse(s);
    } catch (const ConfigError& e) {
      errors_.push_back(e.what());
    }
  }

  void reject_unknown() {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) errors_.push_back("unknown key '" + k + "'");
  }

 private:
  const nlohmann::json& j_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

[[noreturn]] void throw_all(const std::string& what, const std::vector<std::string>& errors) {
  std::string msg = what + " (" + std::to_string(errors.size()) + " problem" + (errors.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ConfigError(msg);
}

void merge_into(nlohmann::json& base, const nlohmann::json& overrides) {
  for (const auto& [k, v] : overrides.items()) base[k] = v;
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void refuse_existing(const std::vector<fs::path>& files, bool force) {
  if (force) return;
  for (const auto& f : files)
    if (fs::exists(f)) throw ConfigError("refusing to overwrite " + f.string() + " (pass --force)");
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---- configs ------------------------------------------------------------------

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = model.to_json();
  j["epochs"] = train.epochs;
  j["lr"] = train.lr;
  j["batch_size"] = train.batch_size;
  j["alpha"] = train.alpha;
  j["beta"] = train.beta;
  j["patience"] = train.patience;
  j["clip_norm"] = train.clip_norm;
  j["route"] = to_string(train.route);
  j["mc_samples"] = train.mc.samples;
  j["grid"] = train.mc.grid;
  j["cutoff"] = train.mc.cutoff;
  j["seed"] = seed;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  RunConfig c;
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  KeyReader r(j, errors);
  ModelConfig& m = c.model;
  r.get("dim", m.dim);
  r.get("heads", m.heads);
  r.get_enum("time_embed", m.time_embed, time_embed_mode_from_string);
  r.get_enum("fusion", m.fusion, fusion_mode_from_string);
  r.get("dropout", m.dropout);
  r.get_enum("bias", m.bias, bias_mode_from_string);
  r.get("buckets", m.buckets);
  r.get("bucket_dim", m.bucket_dim);
  r.get("mtbt_layers", m.mtbt_layers);
  r.get("causal", m.causal);
  r.get("layers", m.layers);
  r.get("ffn", m.ffn);
  r.get("prompt_len", m.prompt_len);
  r.get("sharpness", m.sharpness);
  TrainConfig& t = c.train;
  r.get("epochs", t.epochs);
  r.get("lr", t.lr);
  r.get("batch_size", t.batch_size);
  r.get("alpha", t.alpha);
  r.get("beta", t.beta);
  r.get("patience", t.patience);
  r.get("clip_norm", t.clip_norm);
  r.get_enum("route", t.route, route_from_string);
  r.get("mc_samples", t.mc.samples);
  r.get("grid", t.mc.grid);
  r.get("cutoff", t.mc.cutoff);
  r.get("seed", c.seed);
  r.get("data", c.data);
  r.get("out", c.out);
  r.get("force", c.force);
  r.reject_unknown();

  for (const auto& p : m.problems()) errors.push_back(p);
  for (const auto& p : t.problems()) errors.push_back(p);
  if (c.data.empty()) errors.push_back("'data' (dataset directory) is required");
  if (c.out.empty()) errors.push_back("'out' (output directory) is required");
  if (!errors.empty()) throw_all("invalid run config", errors);
  t.seed = c.seed;
  return c;
}

nlohmann::json GenConfig::to_json() const {
  return {{"preset", preset},
          {"sequences", sequences},
          {"horizon", horizon},
          {"rate", rate},
          {"mu", hawkes.mu},
          {"hawkes_alpha", hawkes.alpha},
          {"hawkes_beta", hawkes.beta},
          {"types", types},
          {"train_ratio", ratios.train},
          {"val_ratio", ratios.val},
          {"test_ratio", ratios.test},
          {"seed", seed}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
  std::vector<std::string> errors;
  GenConfig c;
  if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
  KeyReader r(j, errors);
  r.get("preset", c.preset);
  r.get("sequences", c.sequences);
  r.get("horizon", c.horizon);
  r.get("rate", c.rate);
  r.get("mu", c.hawkes.mu);
  r.get("hawkes_alpha", c.hawkes.alpha);
  r.get("hawkes_beta", c.hawkes.beta);
  r.get("types", c.types);
  r.get("train_ratio", c.ratios.train);
  r.get("val_ratio", c.ratios.val);
  r.get("test_ratio", c.ratios.test);
  r.get("seed", c.seed);
  r.reject_unknown();

  if (c.preset != "poisson" && c.preset != "hawkes") errors.push_back("unknown preset '" + c.preset + "' (poisson|hawkes)");
  if (c.sequences < 3) errors.push_back("need at least 3 sequences to fill three splits");
  if (!(c.horizon > 0.0)) errors.push_back("horizon must be positive");
  if (c.types == 0) errors.push_back("types must be at least 1");
  if (c.preset == "poisson" && !(c.rate > 0.0)) errors.push_back("rate must be positive");
  if (c.preset == "hawkes") {
    try {
      c.hawkes.validate();
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  const double sum = c.ratios.train + c.ratios.val + c.ratios.test;
  if (!(c.ratios.train > 0 && c.ratios.val > 0 && c.ratios.test > 0) || std::abs(sum - 1.0) > 1e-9)
    errors.push_back("split ratios must be positive and sum to 1");
  if (!errors.empty()) throw_all("invalid generator config", errors);
  return c;
}

// ---- generate -------------------------------------------------------------------

std::vector<EventSequence> generate_sequences(const GenConfig& cfg, std::size_t* resamples) {
  Rng rng = make_stream(cfg.seed, Stream::synth);
  std::vector<EventSequence> out;
  std::size_t redraws = 0;
  char id[32];
  for (std::size_t i = 0; i < cfg.sequences; ++i) {
    EventSequence s;
    if (cfg.preset == "poisson") {
      std::size_t r = 0;
      s = gen_poisson(cfg.rate, cfg.horizon, cfg.types, rng, &r);
      redraws += r;
    } else {
      for (s = gen_hawkes_exp(cfg.hawkes, cfg.horizon, cfg.types, rng); s.events.empty();
           s = gen_hawkes_exp(cfg.hawkes, cfg.horizon, cfg.types, rng))
        ++redraws;
    }
    std::snprintf(id, sizeof id, "seq-%06zu", i);
    s.seq_id = id;
    out.push_back(std::move(s));
  }
  if (resamples) *resamples = redraws;
  return out;
}

void cmd_generate(const GenConfig& cfg, const fs::path& out, bool force, std::ostream& log) {
  const std::vector<fs::path> files = {out / "train.jsonl", out / "val.jsonl", out / "test.jsonl", out / "manifest.json"};
  refuse_existing(files, force);
  fs::create_directories(out);

  std::size_t resamples = 0;
  Splits s = split_dataset(generate_sequences(cfg, &resamples), cfg.ratios, cfg.seed);
  write_sequences(files[0], s.train);
  write_sequences(files[1], s.val);
  write_sequences(files[2], s.test);

  const nlohmann::json gen = cfg.to_json();
  nlohmann::json manifest = {{"generator", gen},
                             {"config_hash", config_hash(gen)},
                             {"files", {{"train", "train.jsonl"}, {"val", "val.jsonl"}, {"test", "test.jsonl"}}},
                             {"counts", {{"train", s.train.size()}, {"val", s.val.size()}, {"test", s.test.size()}}},
                             {"resamples", resamples}};
  write_text(files[3], manifest.dump(2) + "\n");
  log << "wrote " << s.train.size() << "/" << s.val.size() << "/" << s.test.size() << " sequences to " << out.string()
      << " (config " << config_hash(gen) << ")\n";
  if (resamples) log << "note: " << resamples << " empty draws were resampled\n";
}

// ---- train ----------------------------------------------------------------------

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
  const fs::path out(cfg.out), data(cfg.data);
  const std::vector<fs::path> files = {out / "checkpoint.json", out / "vocab.json", out / "history.csv",
                                       out / "metrics.json"};
  refuse_existing(files, cfg.force);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl"})
    if (!fs::exists(data / f)) throw ConfigError("dataset file missing: " + (data / f).string());

  const Dataset train_set = load_sequences(data / "train.jsonl");
  const Dataset val_set = load_sequences(data / "val.jsonl", &train_set.types);
  const Dataset test_set = load_sequences(data / "test.jsonl", &train_set.types);
  const TimeScaler scaler = fit_time_scaler(train_set.sequences);
  const Splits scaled{scaler.apply(train_set.sequences), scaler.apply(val_set.sequences), scaler.apply(test_set.sequences)};

  TppModel model(cfg.model, train_set.types, fit_delta_range(scaled.train), cfg.seed);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const nlohmann::json run = cfg.to_json();
  TrainOutcome outcome;
  outcome.config_hash = config_hash(run);
  log << "training " << model.params().scalar_count() << " parameters on " << scaled.train.size()
      << " sequences (config " << outcome.config_hash << ", kernels " << kernels::active().name << ")\n";
  outcome.result = train(model, scaled, tc, &log);
  outcome.test = evaluate(model, scaled.test, tc.mc, tc.route, scaler.scale, cfg.seed);

  fs::create_directories(out);
  save_checkpoint(files[0], model, {scaler, cfg.seed, {{"config", run}, {"config_hash", outcome.config_hash}}});
  write_text(files[1], vocab_json(model).dump(2) + "\n");
  std::ostringstream hist;
  write_history_csv(hist, outcome.result.history);
  write_text(files[2], hist.str());
  nlohmann::json metrics = outcome.test.to_json();
  metrics["config_hash"] = outcome.config_hash;
  metrics["best_epoch"] = outcome.result.best_epoch;
  write_text(files[3], metrics.dump(2) + "\n");
  log << "test ll/event " << fmt(outcome.test.ll_per_event) << "  acc " << fmt(outcome.test.acc) << "  rmse "
      << fmt(outcome.test.rmse_unscaled) << " (" << to_string(tc.route) << ")\n";
  return outcome;
}

// ---- eval / predict ---------------------------------------------------------------

namespace {

struct Loaded {
  std::unique_ptr<TppModel> model;
  CheckpointMeta meta;
  std::vector<EventSequence> scaled;
  std::string hash;
};

Loaded load_for_inference(const fs::path& checkpoint, const fs::path& data) {
  Loaded l;
  l.model = load_checkpoint(checkpoint, &l.meta);
  Dataset ds;
  try {
    ds = load_sequences(data, &l.model->types());
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("vocab mismatch between checkpoint and dataset: ") + e.what());
  }
  l.scaled = l.meta.scaler.apply(ds.sequences);
  l.hash = l.meta.run.value("config_hash", std::string());
  return l;
}

McConfig inference_mc(std::size_t samples) {
  McConfig mc;
  mc.samples = samples;
  mc.validate();
  return mc;
}

}  // namespace

nlohmann::json cmd_eval(const EvalRequest& req, std::ostream& out) {
  Loaded l = load_for_inference(req.checkpoint, req.data);
  if (l.scaled.empty()) throw ConfigError("dataset " + req.data.string() + " has no sequences");
  const EvalMetrics m = evaluate(*l.model, l.scaled, inference_mc(req.mc_samples), req.route, l.meta.scaler.scale, req.seed);
  nlohmann::json j = {{"ll_per_event", m.ll_per_event},
                      {"acc", m.acc},
                      {"rmse_scaled", m.rmse_scaled},
                      {"rmse_unscaled", m.rmse_unscaled},
                      {"route", to_string(m.route)},
                      {"events", m.events},
                      {"predictions", m.predictions},
                      {"truncated", m.truncated},
                      {"config_hash", l.hash}};
  out << j.dump(2) << "\n";
  if (!req.out.empty()) write_text(req.out, j.dump(2) + "\n");
  return j;
}

std::vector<std::string> eval_metrics_problems(const nlohmann::json& j) {
  std::vector<std::string> out;
  if (!j.is_object()) return {"metrics must be a JSON object"};
  auto need = [&](const char* key, bool ok_type, const char* what) {
    if (!j.contains(key)) out.push_back(std::string("missing key '") + key + "'");
    else if (!ok_type) out.push_back(std::string("'") + key + "' must be " + what);
  };
  auto num = [&](const char* k) { return j.contains(k) && j[k].is_number(); };
  auto count = [&](const char* k) { return j.contains(k) && j[k].is_number_unsigned(); };
  need("ll_per_event", num("ll_per_event"), "a number");
  need("acc", num("acc") && j["acc"].get<double>() >= 0.0 && j["acc"].get<double>() <= 1.0, "a number in [0, 1]");
  need("rmse_scaled", num("rmse_scaled") && j["rmse_scaled"].get<double>() >= 0.0, "a non-negative number");
  need("rmse_unscaled", num("rmse_unscaled") && j["rmse_unscaled"].get<double>() >= 0.0, "a non-negative number");
  need("route", j.contains("route") && j["route"].is_string() &&
                    (j["route"] == "heads" || j["route"] == "mbr"), "\"heads\" or \"mbr\"");
  need("events", count("events"), "a non-negative integer");
  need("predictions", count("predictions"), "a non-negative integer");
  need("truncated", count("truncated"), "a non-negative integer");
  need("config_hash", j.contains("config_hash") && j["config_hash"].is_string(), "a string");
  for (const auto& [k, v] : j.items())
    if (k != "ll_per_event" && k != "acc" && k != "rmse_scaled" && k != "rmse_unscaled" && k != "route" && k != "events" &&
        k != "predictions" && k != "truncated" && k != "config_hash")
      out.push_back("unexpected key '" + k + "'");
  return out;
}

void cmd_predict(const EvalRequest& req, std::ostream& out) {
  Loaded l = load_for_inference(req.checkpoint, req.data);
  const McConfig mc = inference_mc(req.mc_samples);
  for (const auto& seq : l.scaled) {
    const NextPrediction p = predict_sequence(*l.model, seq, req.route, mc).back();
    nlohmann::json j = {{"seq_id", seq.seq_id},
                        {"next_time", l.meta.scaler.invert(p.time)},
                        {"next_type", l.model->types().text(p.type)},
                        {"route", to_string(req.route)},
                        {"truncated", p.truncated},
                        {"config_hash", l.hash}};
    out << j.dump() << "\n";
  }
}

// ---- attention dump ---------------------------------------------------------------

std::string render_heatmap_svg(const Matrix& w, const std::string& title) {
  const int cell = 14, margin = 24;
  const int width = margin + static_cast<int>(w.cols()) * cell + 4;
  const int height = margin + static_cast<int>(w.rows()) * cell + 4;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  s << "<title>" << title << "</title>\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"2\" y=\"14\" font-size=\"11\" font-family=\"monospace\">" << title << "</text>\n";
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const int level = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(w(i, j), 0.0, 1.0))));
      s << "<rect x=\"" << margin + static_cast<int>(j) * cell << "\" y=\"" << margin + static_cast<int>(i) * cell
        << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << level << ',' << level << ',' << level
        << ")\"/>\n";
    }
  s << "</svg>\n";
  return s.str();
}

std::vector<fs::path> cmd_attn_dump(const AttnDumpRequest& req, std::ostream& log) {
  Loaded l = load_for_inference(req.checkpoint, req.data);
  if (l.scaled.empty()) throw ConfigError("dataset " + req.data.string() + " has no sequences");
  fs::create_directories(req.out);
  std::vector<fs::path> written;
  for (std::size_t idx : req.sequences) {
    if (idx >= l.scaled.size())
      throw ConfigError("sequence index " + std::to_string(idx) + " out of range (" + std::to_string(l.scaled.size()) +
                        " sequences)");
    const EventSequence& seq = l.scaled[idx];
    ad::Tape tape;
    Rng unused(0);
    ForwardTrace trace;
    l.model->forward(tape, seq, false, unused, &trace);
    for (std::size_t layer = 0; layer < trace.mtbt.weights.size(); ++layer)
      for (std::size_t h = 0; h < trace.mtbt.weights[layer].size(); ++h) {
        const Matrix& w = trace.mtbt.weights[layer][h];
        const std::string stem = safe_name(seq.seq_id) + "_l" + std::to_string(layer) + "_h" + std::to_string(h);
        std::ostringstream csv;
        for (std::size_t i = 0; i < w.rows(); ++i) {
          for (std::size_t j = 0; j < w.cols(); ++j) csv << (j ? "," : "") << fmt(w(i, j));
          csv << "\n";
        }
        written.push_back(req.out / (stem + ".csv"));
        write_text(written.back(), csv.str());
        if (req.svg) {
          written.push_back(req.out / (stem + ".svg"));
          write_text(written.back(), render_heatmap_svg(w, seq.seq_id + " layer " + std::to_string(layer) + " head " +
                                                               std::to_string(h)));
        }
      }
  }
  nlohmann::json index = {{"checkpoint", req.checkpoint.string()}, {"config_hash", l.hash}, {"files", nlohmann::json::array()}};
  for (const auto& f : written) index["files"].push_back(f.filename().string());
  write_text(req.out / "attn_index.json", index.dump(2) + "\n");
  log << "wrote " << written.size() << " attention files to " << req.out.string() << "\n";
  return written;
}

// ---- ablations ----------------------------------------------------------------------

std::string ablation_table() {
  struct Row {
    const char* group;
    const char* variant;
    const char* flags;
  };
  static const Row rows[] = {
      {"baseline", "no fusion, no temporal bias", "--fusion none --bias none"},
      {"fusion", "without fusion", "--fusion none"},
      {"fusion", "additive", "--fusion additive"},
      {"fusion", "concatenation", "--fusion concat"},
      {"fusion", "cross-attention (full model)", "--fusion xattn"},
      {"temporal-bias", "full model", "--bias full"},
      {"temporal-bias", "without bias", "--bias none"},
      {"temporal-bias", "without log bucketing", "--bias nolog"},
      {"temporal-bias", "shared bias across heads", "--bias shared"},
      {"bucket-count", "B = 8", "--buckets 8"},
      {"bucket-count", "B = 16", "--buckets 16"},
      {"bucket-count", "B = 32 (default)", "--buckets 32"},
      {"bucket-count", "B = 64", "--buckets 64"},
      {"bucket-count", "B = 128", "--buckets 128"},
  };
  std::ostringstream s;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s %-30s %s\n", "group", "variant", "flags");
  s << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s %-30s %s\n", r.group, r.variant, r.flags);
    s << buf;
  }
  return s.str();
}

// ---- argv -------------------------------------------------------------------------

namespace {

template <class T>
void flag(CLI::App* app, const std::string& name, const std::string& key, nlohmann::json& ov, const std::string& help) {
  app->add_option_function<T>(name, [&ov, key](const T& v) { ov[key] = v; }, help);
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"taltpp: temporal point process modeling of marked event sequences"};
  bool list_flag = false;
  app.add_flag("--list-ablations", list_flag, "Print the ablation-to-flag mapping and exit");

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic train/val/test splits and a manifest");
  nlohmann::json gen_ov = nlohmann::json::object();
  std::string gen_config, gen_manifest, gen_out;
  bool gen_force = false;
  gen->add_option("--config", gen_config, "Generator config JSON");
  gen->add_option("--manifest", gen_manifest, "Replay the generator settings of an existing manifest");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--force", gen_force, "Overwrite existing files");
  flag<std::string>(gen, "--preset", "preset", gen_ov, "poisson|hawkes");
  flag<std::size_t>(gen, "--sequences", "sequences", gen_ov, "Number of sequences");
  flag<double>(gen, "--horizon", "horizon", gen_ov, "Observation horizon T");
  flag<double>(gen, "--rate", "rate", gen_ov, "Poisson rate");
  flag<double>(gen, "--mu", "mu", gen_ov, "Hawkes baseline");
  flag<double>(gen, "--hawkes-alpha", "hawkes_alpha", gen_ov, "Hawkes excitation");
  flag<double>(gen, "--hawkes-beta", "hawkes_beta", gen_ov, "Hawkes decay");
  flag<std::size_t>(gen, "--types", "types", gen_ov, "Number of event types");
  flag<std::uint64_t>(gen, "--seed", "seed", gen_ov, "Random seed");

  // train
  auto* tr = app.add_subcommand("train", "Train a model; writes checkpoint, vocab, history and test metrics");
  nlohmann::json tr_ov = nlohmann::json::object();
  std::string tr_config;
  tr->add_option("--config", tr_config, "Run config JSON (flags override it)");
  flag<std::string>(tr, "--data", "data", tr_ov, "Directory with train/val/test .jsonl");
  flag<std::string>(tr, "--out", "out", tr_ov, "Output directory");
  tr->add_flag_function("--force", [&](std::int64_t) { tr_ov["force"] = true; }, "Overwrite existing outputs");
  flag<std::string>(tr, "--fusion", "fusion", tr_ov, "none|additive|concat|xattn");
  flag<std::string>(tr, "--bias", "bias", tr_ov, "full|none|nolog|shared");
  flag<std::string>(tr, "--time-embed", "time_embed", tr_ov, "linear|sin|interval");
  flag<std::size_t>(tr, "--buckets", "buckets", tr_ov, "Number of log buckets B");
  flag<std::size_t>(tr, "--bucket-dim", "bucket_dim", tr_ov, "Bucket embedding width");
  flag<std::size_t>(tr, "--dim", "dim", tr_ov, "Model width D");
  flag<std::size_t>(tr, "--heads", "heads", tr_ov, "Attention heads");
  flag<std::size_t>(tr, "--layers", "layers", tr_ov, "Backbone layers");
  flag<std::size_t>(tr, "--mtbt-layers", "mtbt_layers", tr_ov, "Temporal-bias attention layers");
  flag<std::size_t>(tr, "--ffn", "ffn", tr_ov, "Backbone FFN width");
  flag<std::size_t>(tr, "--prompt-len", "prompt_len", tr_ov, "Prompt length");
  flag<double>(tr, "--dropout", "dropout", tr_ov, "Fusion dropout");
  flag<double>(tr, "--sharpness", "sharpness", tr_ov, "Softplus sharpness");
  flag<bool>(tr, "--causal", "causal", tr_ov, "Causal masking (true|false)");
  flag<std::size_t>(tr, "--epochs", "epochs", tr_ov, "Training epochs");
  flag<double>(tr, "--lr", "lr", tr_ov, "Learning rate");
  flag<std::size_t>(tr, "--batch-size", "batch_size", tr_ov, "Sequences per batch");
  flag<double>(tr, "--alpha", "alpha", tr_ov, "Type loss weight");
  flag<double>(tr, "--beta", "beta", tr_ov, "Time loss weight");
  flag<std::size_t>(tr, "--patience", "patience", tr_ov, "Early-stop patience (0 = fixed epochs)");
  flag<double>(tr, "--clip-norm", "clip_norm", tr_ov, "Gradient norm clip (0 = off)");
  flag<std::string>(tr, "--route", "route", tr_ov, "heads|mbr");
  flag<std::size_t>(tr, "--mc-samples", "mc_samples", tr_ov, "Integral samples per interval");
  flag<std::uint64_t>(tr, "--seed", "seed", tr_ov, "Random seed");

  // eval / predict
  EvalRequest ereq;
  std::string route = "heads";
  std::optional<std::uint64_t> eval_seed;
  std::string eval_out;
  auto add_inference = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", ereq.checkpoint, "Checkpoint file")->required();
    sub->add_option("--data", ereq.data, "Sequences (.jsonl)")->required();
    sub->add_option("--route", route, "heads|mbr");
    sub->add_option("--mc-samples", ereq.mc_samples, "Integral samples per interval");
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { eval_seed = v; }, "Random seed");
  };
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  add_inference(ev);
  ev->add_option("--out", eval_out, "Also write metrics JSON here");
  auto* pr = app.add_subcommand("predict", "Predict the next event of every sequence");
  add_inference(pr);

  // attn-dump
  auto* ad_cmd = app.add_subcommand("attn-dump", "Export per-head temporal-bias attention matrices");
  AttnDumpRequest areq;
  bool no_svg = false;
  ad_cmd->add_option("--checkpoint", areq.checkpoint, "Checkpoint file")->required();
  ad_cmd->add_option("--data", areq.data, "Sequences (.jsonl)")->required();
  ad_cmd->add_option("--out", areq.out, "Output directory")->required();
  ad_cmd->add_option("--sequence", areq.sequences, "Sequence indices to dump");
  ad_cmd->add_flag("--no-svg", no_svg, "CSV only");

  auto* la = app.add_subcommand("list-ablations", "Print the ablation-to-flag mapping");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (list_flag || la->parsed()) {
      std::cout << ablation_table();
      return 0;
    }
    if (gen->parsed()) {
      nlohmann::json j = nlohmann::json::object();
      if (!gen_manifest.empty()) j = read_json_file(gen_manifest).at("generator");
      if (!gen_config.empty()) merge_into(j, read_json_file(gen_config));
      merge_into(j, gen_ov);
      cmd_generate(GenConfig::from_json(j), gen_out, gen_force, std::cout);
      return 0;
    }
    if (tr->parsed()) {
      nlohmann::json j = tr_config.empty() ? nlohmann::json::object() : read_json_file(tr_config);
      merge_into(j, tr_ov);
      cmd_train(RunConfig::from_json(j), std::cout);
      return 0;
    }
    if (ev->parsed() || pr->parsed()) {
      ereq.route = route_from_string(route);
      if (eval_seed) {
        ereq.seed = *eval_seed;
      } else {
        CheckpointMeta meta;
        load_checkpoint(ereq.checkpoint, &meta);
        ereq.seed = meta.seed;
      }
      ereq.out = eval_out;
      if (ev->parsed())
        cmd_eval(ereq, std::cout);
      else
        cmd_predict(ereq, std::cout);
      return 0;
    }
    if (ad_cmd->parsed()) {
      areq.svg = !no_svg;
      cmd_attn_dump(areq, std::cout);
      return 0;
    }
    std::cout << app.help();
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace taltpp

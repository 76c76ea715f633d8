#include "taltpp/model.hpp"

#include <set>

namespace taltpp {

namespace {

const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys = {"dim",         "heads",  "time_embed", "fusion", "dropout",
                                             "bias",        "buckets", "bucket_dim", "mtbt_layers", "causal",
                                             "layers",      "ffn",    "prompt_len", "sharpness"};
  return keys;
}

MtbtConfig mtbt_config_for(const ModelConfig& c, const DeltaRange& r) {
  MtbtConfig m;
  m.heads = c.heads;
  m.dim = c.dim;
  m.buckets = c.buckets;
  m.bucket_dim = c.bucket_dim;
  m.bias_mode = c.bias;
  m.dt_min = r.min;
  m.dt_max = r.max;
  m.causal = c.causal;
  m.layers = c.mtbt_layers;
  return m;
}

TcfConfig tcf_config_for(const ModelConfig& c) { return {c.fusion, c.heads, c.dim, c.dropout}; }

BackboneConfig backbone_config_for(const ModelConfig& c) {
  return {c.layers, c.heads, c.dim, c.ffn, c.prompt_len, c.causal};
}

}  // namespace

std::vector<std::string> ModelConfig::problems() const {
  std::vector<std::string> out;
  if (dim == 0) out.push_back("dim must be positive");
  if (heads == 0 || (dim % heads) != 0) out.push_back("dim must be divisible by heads");
  if (time_embed == TimeEmbedMode::sinusoidal && dim % 2 != 0) out.push_back("sinusoidal time embedding needs an even dim");
  if (!(dropout >= 0.0 && dropout < 1.0)) out.push_back("dropout must lie in [0, 1)");
  if (buckets < 2) out.push_back("buckets must be at least 2");
  if (bucket_dim == 0) out.push_back("bucket_dim must be positive");
  if (layers > 0 && ffn == 0) out.push_back("ffn must be positive");
  if (!(sharpness > 0.0)) out.push_back("sharpness must be positive");
  return out;
}

void ModelConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"heads", heads},
          {"time_embed", to_string(time_embed)},
          {"fusion", to_string(fusion)},
          {"dropout", dropout},
          {"bias", to_string(bias)},
          {"buckets", buckets},
          {"bucket_dim", bucket_dim},
          {"mtbt_layers", mtbt_layers},
          {"causal", causal},
          {"layers", layers},
          {"ffn", ffn},
          {"prompt_len", prompt_len},
          {"sharpness", sharpness}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!model_keys().count(k)) throw ConfigError("unknown model config key '" + k + "'");
  ModelConfig c;
  try {
    if (j.contains("dim")) c.dim = j["dim"].get<std::size_t>();
    if (j.contains("heads")) c.heads = j["heads"].get<std::size_t>();
    if (j.contains("time_embed")) c.time_embed = time_embed_mode_from_string(j["time_embed"].get<std::string>());
    if (j.contains("fusion")) c.fusion = fusion_mode_from_string(j["fusion"].get<std::string>());
    if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
    if (j.contains("bias")) c.bias = bias_mode_from_string(j["bias"].get<std::string>());
    if (j.contains("buckets")) c.buckets = j["buckets"].get<std::size_t>();
    if (j.contains("bucket_dim")) c.bucket_dim = j["bucket_dim"].get<std::size_t>();
    if (j.contains("mtbt_layers")) c.mtbt_layers = j["mtbt_layers"].get<std::size_t>();
    if (j.contains("causal")) c.causal = j["causal"].get<bool>();
    if (j.contains("layers")) c.layers = j["layers"].get<std::size_t>();
    if (j.contains("ffn")) c.ffn = j["ffn"].get<std::size_t>();
    if (j.contains("prompt_len")) c.prompt_len = j["prompt_len"].get<std::size_t>();
    if (j.contains("sharpness")) c.sharpness = j["sharpness"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

TppModel::TppModel(const ModelConfig& cfg, const TypeVocab& types, const DeltaRange& range, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      types_(types),
      range_(range),
      mtbt_cfg_(mtbt_config_for(cfg, range)),
      init_(make_stream(seed, Stream::init)),
      time_(params_, "time", cfg.time_embed, cfg.dim, init_),
      tcf_(params_, "tcf", tcf_config_for(cfg), init_),
      mtbt_(params_, "mtbt", mtbt_cfg_, init_),
      backbone_(params_, "backbone", backbone_config_for(cfg), init_),
      intensity_(params_, "intensity", cfg.dim, types.size(), cfg.sharpness, init_) {
  for (const auto& name : types_.names()) type_tokens_.push_back(tokenize_type(name, tokens_, true));
  params_.add("tok.emb", init_embedding(tokens_.size(), cfg.dim, init_));
  params_.add("head.type.w", init_projection(cfg.dim, types.size(), init_));
  params_.add("head.type.b", Matrix(1, types.size()));
  params_.add("head.time.w", init_projection(cfg.dim, 1, init_));
  params_.add("head.time.b", Matrix(1, 1, 1.0));  // scaled gaps have mean 1
}

ForwardResult TppModel::forward(ad::Tape& tape, const EventSequence& seq, bool training, Rng& dropout_rng,
                                ForwardTrace* trace) const {
  const std::size_t n = seq.size();
  if (n == 0) throw std::invalid_argument("forward: empty sequence");

  std::vector<double> t(n), prev(n);
  std::vector<std::size_t> ids, offsets{0};
  for (std::size_t i = 0; i < n; ++i) {
    const Event& e = seq.events[i];
    if (e.type_id >= type_tokens_.size()) throw std::out_of_range("forward: type id outside the model vocabulary");
    t[i] = e.t;
    prev[i] = i ? seq.events[i - 1].t : e.t;
    const auto& tok = type_tokens_[e.type_id];
    ids.insert(ids.end(), tok.begin(), tok.end());
    offsets.push_back(ids.size());
  }

  ad::Var x = embed_tokens(ids, tape.param(params_.at("tok.emb")));
  ad::Var e = time_.embed(tape, t, prev);
  ad::Var fused = tcf_.fuse(tape, x, e, offsets, training, dropout_rng, trace ? &trace->fusion : nullptr);
  ad::Var s = pool_event(fused, offsets);
  ad::Var refined = mtbt_.forward(tape, s, t, trace ? &trace->mtbt : nullptr);

  ad::Var prompt;
  if (cfg_.prompt_len) prompt = backbone_.prompt(tape);
  AssembledInput in = assemble_input(cfg_.prompt_len ? &prompt : nullptr, e, x, offsets, refined);
  return {backbone_.encode_context(tape, in.tokens, in.segments)};
}

ad::Var TppModel::type_logits(ad::Tape& tape, ad::Var contexts) const {
  return ad::linear(contexts, tape.param(params_.at("head.type.w")), tape.param(params_.at("head.type.b")));
}

ad::Var TppModel::time_gaps(ad::Tape& tape, ad::Var contexts) const {
  return ad::linear(contexts, tape.param(params_.at("head.time.w")), tape.param(params_.at("head.time.b")));
}

}  // namespace taltpp

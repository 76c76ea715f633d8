#include "taltpp/mtbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace taltpp {

const char* to_string(BiasMode m) {
  switch (m) {
    case BiasMode::full: return "full";
    case BiasMode::none: return "none";
    case BiasMode::no_log_bucket: return "nolog";
    case BiasMode::shared: return "shared";
  }
  return "?";
}

BiasMode bias_mode_from_string(const std::string& s) {
  if (s == "full") return BiasMode::full;
  if (s == "none") return BiasMode::none;
  if (s == "nolog" || s == "no_log_bucket") return BiasMode::no_log_bucket;
  if (s == "shared") return BiasMode::shared;
  throw ConfigError("unknown bias mode '" + s + "' (expected full|none|nolog|shared)");
}

void MtbtConfig::validate() const {
  if (buckets < 2) throw ConfigError("mtbt: bucket count must be at least 2");
  if (!(epsilon > 0.0)) throw ConfigError("mtbt: epsilon must be positive");
  if (!(dt_min >= 0.0) || !(dt_max > dt_min)) throw ConfigError("mtbt: require dt_max > dt_min >= 0");
  if (heads == 0 || dim % heads != 0) throw ConfigError("mtbt: dimension must be divisible by heads");
  if (bucket_dim == 0) throw ConfigError("mtbt: bucket embedding width must be positive");
}

DeltaRange fit_delta_range(std::span<const EventSequence> train) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& s : train) {
    for (std::size_t i = 1; i < s.events.size(); ++i) lo = std::min(lo, s.events[i].t - s.events[i - 1].t);
    if (s.events.size() > 1) hi = std::max(hi, s.events.back().t - s.events.front().t);
  }
  if (!std::isfinite(lo) || !(hi > lo)) throw ValidationError("cannot fit time-gap range: need sequences with two or more events");
  return {lo, hi};
}

Matrix time_delta_matrix(std::span<const double> t) {
  const std::size_t n = t.size();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = std::abs(t[i] - t[j]);
  return d;
}

std::size_t log_bucket(double delta, const MtbtConfig& cfg) {
  const double clamped = std::clamp(delta, cfg.dt_min, cfg.dt_max);
  const double lo = std::log(cfg.dt_min + cfg.epsilon);
  const double num = std::log(clamped + cfg.epsilon) - lo;
  const double den = std::log(cfg.dt_max + cfg.epsilon) - lo;
  const double top = static_cast<double>(cfg.buckets - 1);
  const double b = std::floor(top * (num / den));
  return static_cast<std::size_t>(std::clamp(b, 0.0, top));
}

std::vector<std::size_t> log_bucketize(const Matrix& delta, const MtbtConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> out(delta.size());
  for (std::size_t i = 0; i < delta.size(); ++i) out[i] = log_bucket(delta[i], cfg);
  return out;
}

// ---- bias table ---------------------------------------------------------------

TemporalBiasTable::TemporalBiasTable(ParamSet& params, const std::string& prefix, const MtbtConfig& cfg, Rng& init)
    : cfg_(cfg), params_(&params), prefix_(prefix) {
  const std::size_t db = cfg.bucket_dim;
  switch (cfg.bias_mode) {
    case BiasMode::none:
      return;
    case BiasMode::full:
    case BiasMode::shared: {
      const std::size_t out = cfg.bias_mode == BiasMode::full ? cfg.heads : 1;
      params.add(prefix + ".emb", init_embedding(cfg.buckets, db, init));
      params.add(prefix + ".w1", init_projection(db, db, init));
      params.add(prefix + ".b1", Matrix(1, db));
      params.add(prefix + ".w2", init_projection(db, out, init));
      params.add(prefix + ".b2", Matrix(1, out));
      return;
    }
    case BiasMode::no_log_bucket:
      params.add(prefix + ".w1", init_projection(1, db, init));
      params.add(prefix + ".b1", Matrix(1, db));
      params.add(prefix + ".w2", init_projection(db, cfg.heads, init));
      params.add(prefix + ".b2", Matrix(1, cfg.heads));
      return;
  }
}

ad::Var TemporalBiasTable::bias(ad::Tape& tape, const Matrix& delta, std::span<const std::size_t> buckets) const {
  const std::size_t n = delta.rows();
  if (delta.cols() != n) throw std::invalid_argument("bias: delta must be square");
  auto P = [&](const char* name) { return tape.param(params_->at(prefix_ + name)); };
  auto mlp = [&](ad::Var in) { return ad::linear(ad::tanh(ad::linear(in, P(".w1"), P(".b1"))), P(".w2"), P(".b2")); };

  switch (cfg_.bias_mode) {
    case BiasMode::none:
      return tape.constant(Matrix(n * n, cfg_.heads));
    case BiasMode::full: {
      if (buckets.size() != n * n) throw std::invalid_argument("bias: bucket count mismatch");
      // MLP over the B table rows, then per-pair lookup: identical to MLP(Emb(b_ij)) per pair.
      return ad::gather_rows(mlp(P(".emb")), buckets);
    }
    case BiasMode::shared: {
      if (buckets.size() != n * n) throw std::invalid_argument("bias: bucket count mismatch");
      ad::Var scalar = ad::gather_rows(mlp(P(".emb")), buckets);
      return ad::matmul(scalar, tape.constant(Matrix(1, cfg_.heads, 1.0)));
    }
    case BiasMode::no_log_bucket: {
      Matrix raw(n * n, 1);
      for (std::size_t i = 0; i < n * n; ++i) raw[i] = delta[i];
      return mlp(tape.constant(std::move(raw)));
    }
  }
  throw std::logic_error("unreachable");
}

ad::Var bias_from_buckets(ad::Tape& tape, const Matrix& delta, std::span<const std::size_t> buckets,
                          const TemporalBiasTable& table) {
  return table.bias(tape, delta, buckets);
}

// ---- attention layer --------------------------------------------------------------

MtbtLayer::MtbtLayer(ParamSet& params, const std::string& prefix, const MtbtConfig& cfg, Rng& init)
    : cfg_(cfg), params_(&params), prefix_(prefix), table_(params, prefix + ".bias", cfg, init) {
  const std::size_t d = cfg.dim;
  params.add(prefix + ".wq", init_projection(d, d, init));
  params.add(prefix + ".wk", init_projection(d, d, init));
  params.add(prefix + ".wv", init_projection(d, d, init));
  params.add(prefix + ".wo", init_projection(d, d, init));
  params.add(prefix + ".ln.gamma", Matrix(1, d, 1.0));
  params.add(prefix + ".ln.beta", Matrix(1, d));
  params.add(prefix + ".ffn.w1", init_projection(d, 4 * d, init));
  params.add(prefix + ".ffn.b1", Matrix(1, 4 * d));
  params.add(prefix + ".ffn.w2", init_projection(4 * d, d, init));
  params.add(prefix + ".ffn.b2", Matrix(1, d));
}

ad::Var MtbtLayer::forward(ad::Tape& tape, ad::Var events, const ad::Var* bias, const ad::AttentionSpec& mask,
                           ad::AttentionWeights* weights_out) const {
  auto P = [&](const char* name) { return tape.param(params_->at(prefix_ + name)); };
  ad::Var q = ad::matmul(events, P(".wq"));
  ad::Var k = ad::matmul(events, P(".wk"));
  ad::Var v = ad::matmul(events, P(".wv"));
  ad::Var y = ad::matmul(ad::attention(q, k, v, mask, bias, weights_out), P(".wo"));
  ad::Var normed = ad::layer_norm(ad::add(events, y), P(".ln.gamma"), P(".ln.beta"));
  ad::Var hidden = ad::gelu(ad::linear(normed, P(".ffn.w1"), P(".ffn.b1")));
  return ad::linear(hidden, P(".ffn.w2"), P(".ffn.b2"));
}

ad::Var biased_self_attention(ad::Tape& tape, const MtbtLayer& layer, ad::Var events, const ad::Var* bias, std::size_t heads,
                              bool causal, ad::AttentionWeights* weights_out) {
  const std::size_t n = events.rows();
  const ad::AttentionSpec mask = causal ? ad::AttentionSpec::causal(heads, n) : ad::AttentionSpec::full(heads, n, n);
  return layer.forward(tape, events, bias, mask, weights_out);
}

Mtbt::Mtbt(ParamSet& params, const std::string& prefix, const MtbtConfig& cfg, Rng& init) : cfg_(cfg) {
  cfg_.validate();
  for (std::size_t l = 0; l < cfg.layers; ++l) layers_.emplace_back(params, prefix + "." + std::to_string(l), cfg, init);
}

ad::Var Mtbt::forward(ad::Tape& tape, ad::Var events, std::span<const double> times, MtbtTrace* trace) const {
  const std::size_t n = events.rows();
  if (times.size() != n) throw std::invalid_argument("mtbt: one timestamp per event required");
  const Matrix delta = time_delta_matrix(times);
  std::vector<std::size_t> buckets;
  if (cfg_.bias_mode == BiasMode::full || cfg_.bias_mode == BiasMode::shared) buckets = log_bucketize(delta, cfg_);
  if (trace) trace->weights.assign(layers_.size(), {});

  ad::Var x = events;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    ad::AttentionWeights* w = trace ? &trace->weights[l] : nullptr;
    if (cfg_.bias_mode == BiasMode::none) {
      x = biased_self_attention(tape, layers_[l], x, nullptr, cfg_.heads, cfg_.causal, w);
    } else {
      ad::Var b = layers_[l].bias_table().bias(tape, delta, buckets);
      x = biased_self_attention(tape, layers_[l], x, &b, cfg_.heads, cfg_.causal, w);
    }
  }
  return x;
}

}  // namespace taltpp

#pragma once

// Cross-event self-attention with learnable temporal biases.
//
// Every pair of events (i, j) gets a time gap |t_i - t_j|, which is mapped to
// one of B logarithmically spaced buckets. A bucket embedding passed through a
// small tanh MLP yields one additive attention offset per head. Ablation modes
// remove the bias (none), replace the bucket lookup with the raw gap
// (no_log_bucket), or force one offset shared by all heads (shared).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "taltpp/autodiff.hpp"
#include "taltpp/errors.hpp"
#include "taltpp/event_data.hpp"

namespace taltpp {

enum class BiasMode { full, none, no_log_bucket, shared };

const char* to_string(BiasMode m);
BiasMode bias_mode_from_string(const std::string& s);

struct MtbtConfig {
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t buckets = 32;
  std::size_t bucket_dim = 32;
  BiasMode bias_mode = BiasMode::full;
  double epsilon = 1e-6;
  double dt_min = 0.0;
  double dt_max = 1.0;
  bool causal = true;
  std::size_t layers = 1;

  void validate() const;
};

struct DeltaRange {
  double min = 0.0;
  double max = 1.0;
};

// Smallest positive consecutive gap and largest within-sequence span over the
// (already scaled) training split: the extremes a pairwise gap can take.
DeltaRange fit_delta_range(std::span<const EventSequence> train);

// N x N matrix of |t_i - t_j|.
Matrix time_delta_matrix(std::span<const double> t);

// Bucket of one gap. The gap is clamped into [dt_min, dt_max] first, so the
// index always lies in [0, B-1]; monotone non-decreasing in the gap.
std::size_t log_bucket(double delta, const MtbtConfig& cfg);

// Row-major N x N bucket indices.
std::vector<std::size_t> log_bucketize(const Matrix& delta, const MtbtConfig& cfg);

class TemporalBiasTable {
 public:
  TemporalBiasTable(ParamSet& params, const std::string& prefix, const MtbtConfig& cfg, Rng& init);

  // (N*N) x H per-pair, per-head offsets. Row i*N + j belongs to pair (i, j).
  ad::Var bias(ad::Tape& tape, const Matrix& delta, std::span<const std::size_t> buckets) const;

  BiasMode mode() const { return cfg_.bias_mode; }

 private:
  MtbtConfig cfg_;
  ParamSet* params_;
  std::string prefix_;
};

ad::Var bias_from_buckets(ad::Tape& tape, const Matrix& delta, std::span<const std::size_t> buckets,
                          const TemporalBiasTable& table);

struct MtbtTrace {
  // layer -> head -> N x N attention weights
  std::vector<ad::AttentionWeights> weights;
};

class MtbtLayer {
 public:
  MtbtLayer(ParamSet& params, const std::string& prefix, const MtbtConfig& cfg, Rng& init);

  // s'_i = FFN(LN(s_i + concat_h(sum_j alpha_ij^h V_j^h) W_O)). `bias` may be
  // null (no temporal offset at all).
  ad::Var forward(ad::Tape& tape, ad::Var events, const ad::Var* bias, const ad::AttentionSpec& mask,
                  ad::AttentionWeights* weights_out = nullptr) const;

  const TemporalBiasTable& bias_table() const { return table_; }

 private:
  MtbtConfig cfg_;
  ParamSet* params_;
  std::string prefix_;
  TemporalBiasTable table_;
};

// Convenience entry point: biased_self_attention with the attention mask
// derived from cfg.causal.
ad::Var biased_self_attention(ad::Tape& tape, const MtbtLayer& layer, ad::Var events, const ad::Var* bias,
                              std::size_t heads, bool causal, ad::AttentionWeights* weights_out = nullptr);

class Mtbt {
 public:
  Mtbt(ParamSet& params, const std::string& prefix, const MtbtConfig& cfg, Rng& init);

  // events: N x D pooled event vectors; times: N scaled timestamps.
  ad::Var forward(ad::Tape& tape, ad::Var events, std::span<const double> times, MtbtTrace* trace = nullptr) const;

  const MtbtConfig& config() const { return cfg_; }
  const MtbtLayer& layer(std::size_t i) const { return layers_.at(i); }

 private:
  MtbtConfig cfg_;
  std::vector<MtbtLayer> layers_;
};

}  // namespace taltpp

#pragma once

// Temporal cross-fusion: injects each event's temporal embedding into its
// semantic token matrix, then mean-pools to one vector per event.
//
// All events of a sequence are processed together. Token rows of every event
// are stacked into one (sum L_i) x D matrix; `offsets` (N+1 entries) delimits
// event i's rows as [offsets[i], offsets[i+1]). Temporal embeddings are N x D.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "taltpp/autodiff.hpp"
#include "taltpp/errors.hpp"

namespace taltpp {

enum class FusionMode { none, additive, concat, cross_attention };

const char* to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

struct TcfConfig {
  FusionMode mode = FusionMode::cross_attention;
  std::size_t heads = 4;
  std::size_t dim = 64;
  double dropout = 0.1;

  void validate() const;
};

class Tcf {
 public:
  Tcf(ParamSet& params, const std::string& prefix, const TcfConfig& cfg, Rng& init);

  // Returns the fused token matrix (same shape as tokens). With mode none the
  // tokens pass through untouched. `attn_out`, when given, receives the
  // cross-attention weights (heads x (tokens x events)).
  ad::Var fuse(ad::Tape& tape, ad::Var tokens, ad::Var time_emb, std::span<const std::size_t> offsets, bool training,
               Rng& rng, ad::AttentionWeights* attn_out = nullptr) const;

  const TcfConfig& config() const { return cfg_; }

 private:
  ad::Var norm(ad::Tape& tape, ad::Var x) const;

  TcfConfig cfg_;
  ParamSet* params_;
  std::string prefix_;
};

// s_i = mean of event i's fused token rows.
ad::Var pool_event(ad::Var tokens, std::span<const std::size_t> offsets);

// Event index of every stacked token row.
std::vector<std::size_t> token_owner(std::span<const std::size_t> offsets);

}  // namespace taltpp

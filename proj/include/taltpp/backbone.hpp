#pragma once

// Hybrid-sequence encoder. The input stream is
//   [P, e_t(t_1), X_1, s'_1, e_t(t_2), X_2, s'_2, ..., e_t(t_N), X_N, s'_N]
// and a compact pre-LN causal transformer produces one context vector per
// event, read at that event's s'_i slot.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "taltpp/autodiff.hpp"
#include "taltpp/errors.hpp"

namespace taltpp {

struct BackboneConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t dim = 64;
  std::size_t ffn = 256;
  std::size_t prompt_len = 4;
  bool causal = true;

  void validate() const;
};

struct SegmentRange {
  std::size_t start = 0;  // e_t(t_i) slot
  std::size_t last = 0;   // s'_i slot (inclusive)
};

struct SegmentMap {
  std::size_t prompt_len = 0;
  std::vector<SegmentRange> events;
  std::size_t total = 0;
};

// Layout for events with the given token counts L_i.
SegmentMap plan_segments(std::size_t prompt_len, std::span<const std::size_t> token_counts);

struct AssembledInput {
  ad::Var tokens;  // total x D
  SegmentMap segments;
};

// prompt: P_len x D (may have zero rows); time_emb, refined: N x D;
// semantic: stacked token rows delimited by offsets (N+1 entries).
AssembledInput assemble_input(const ad::Var* prompt, ad::Var time_emb, ad::Var semantic,
                              std::span<const std::size_t> offsets, ad::Var refined);

class Backbone {
 public:
  Backbone(ParamSet& params, const std::string& prefix, const BackboneConfig& cfg, Rng& init);

  // Full hidden-state matrix (total x D) after the transformer stack.
  ad::Var encode(ad::Tape& tape, ad::Var tokens) const;

  // (N+1) x D: row 0 is the pre-first-event context h_0 (last prompt token, or
  // zeros without a prompt); row i is the hidden state at event i's s'_i slot.
  ad::Var encode_context(ad::Tape& tape, ad::Var tokens, const SegmentMap& segments) const;

  ad::Var prompt(ad::Tape& tape) const;
  const BackboneConfig& config() const { return cfg_; }

 private:
  BackboneConfig cfg_;
  ParamSet* params_;
  std::string prefix_;
};

}  // namespace taltpp

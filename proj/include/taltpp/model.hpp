#pragma once

// The full event model: token + temporal embeddings, temporal cross-fusion,
// biased cross-event attention, the hybrid-sequence backbone, the intensity
// head, and the auxiliary type/time heads.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "taltpp/autodiff.hpp"
#include "taltpp/backbone.hpp"
#include "taltpp/embeddings.hpp"
#include "taltpp/event_data.hpp"
#include "taltpp/intensity.hpp"
#include "taltpp/mtbt.hpp"
#include "taltpp/tcf.hpp"

namespace taltpp {

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  TimeEmbedMode time_embed = TimeEmbedMode::linear;
  FusionMode fusion = FusionMode::cross_attention;
  double dropout = 0.1;
  BiasMode bias = BiasMode::full;
  std::size_t buckets = 32;
  std::size_t bucket_dim = 32;
  std::size_t mtbt_layers = 1;
  bool causal = true;
  std::size_t layers = 2;
  std::size_t ffn = 256;
  std::size_t prompt_len = 4;
  double sharpness = 1.0;

  // Collects every violation instead of stopping at the first.
  std::vector<std::string> problems() const;
  void validate() const;

  nlohmann::json to_json() const;
  // Unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j);
};

// Per-sequence forward outputs.
struct ForwardResult {
  ad::Var contexts;  // (N+1) x D, row 0 = h_0
};

struct ForwardTrace {
  ad::AttentionWeights fusion;  // heads x (tokens x events), cross-attention fusion only
  MtbtTrace mtbt;
};

class TppModel {
 public:
  // `types` fixes K and the type-name tokenization; `range` is the gap range of
  // the scaled training split used by the bucketizer.
  TppModel(const ModelConfig& cfg, const TypeVocab& types, const DeltaRange& range, std::uint64_t seed);

  TppModel(const TppModel&) = delete;
  TppModel& operator=(const TppModel&) = delete;

  // seq must use scaled times and type ids of this model's vocabulary.
  ForwardResult forward(ad::Tape& tape, const EventSequence& seq, bool training, Rng& dropout_rng,
                        ForwardTrace* trace = nullptr) const;

  ad::Var type_logits(ad::Tape& tape, ad::Var contexts) const;  // R x K
  ad::Var time_gaps(ad::Tape& tape, ad::Var contexts) const;    // R x 1

  const ModelConfig& config() const { return cfg_; }
  const MtbtConfig& mtbt_config() const { return mtbt_cfg_; }
  const TypeVocab& types() const { return types_; }
  const TokenVocab& tokens() const { return tokens_; }
  const DeltaRange& delta_range() const { return range_; }
  std::size_t num_types() const { return types_.size(); }
  const IntensityHead& intensity() const { return intensity_; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  ModelConfig cfg_;
  TypeVocab types_;
  TokenVocab tokens_;
  DeltaRange range_;
  MtbtConfig mtbt_cfg_;
  std::vector<std::vector<std::size_t>> type_tokens_;

  mutable ParamSet params_;
  Rng init_;
  TemporalEmbedder time_;
  Tcf tcf_;
  Mtbt mtbt_;
  Backbone backbone_;
  IntensityHead intensity_;
};

}  // namespace taltpp

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "taltpp/autodiff.hpp"
#include "taltpp/errors.hpp"

namespace taltpp {

// Word-level vocabulary for event-type names. Id 0 is reserved for padding.
class TokenVocab {
 public:
  static constexpr std::size_t kPadId = 0;
  static constexpr const char* kPadToken = "<pad>";

  TokenVocab();

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  bool contains(const std::string& tok) const { return ids_.count(tok) != 0; }
  std::size_t id(const std::string& tok) const;
  std::size_t add(const std::string& tok);

  nlohmann::json to_json() const;
  static TokenVocab from_json(const nlohmann::json& j);
  friend bool operator==(const TokenVocab&, const TokenVocab&) = default;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> ids_;
};

// Lowercases and splits on whitespace and ASCII punctuation.
std::vector<std::string> split_type_text(const std::string& text);

// Token ids for one type name. Unknown tokens are added when `build` is true;
// otherwise they raise ValidationError (closed vocabulary).
std::vector<std::size_t> tokenize_type(const std::string& type_text, TokenVocab& vocab, bool build);
std::vector<std::size_t> tokenize_type(const std::string& type_text, const TokenVocab& vocab);

// Row i of the result is table[ids[i]].
ad::Var embed_tokens(std::span<const std::size_t> ids, ad::Var table);

enum class TimeEmbedMode { linear, sinusoidal, interval_mlp };

const char* to_string(TimeEmbedMode m);
TimeEmbedMode time_embed_mode_from_string(const std::string& s);

// e_t(t): maps a scaled timestamp (and the previous one) to a D-vector.
//   linear        w * t + b
//   sinusoidal    interleaved sin/cos of t at D/2 geometric frequencies, base 1e4
//   interval_mlp  tanh MLP (hidden D) on [t, t - prev_t]
class TemporalEmbedder {
 public:
  TemporalEmbedder(ParamSet& params, const std::string& prefix, TimeEmbedMode mode, std::size_t dim, Rng& init);

  // One row per timestamp. prev_t[i] <= t[i]; callers pass prev_t[0] = t[0]
  // for the first event of a sequence.
  ad::Var embed(ad::Tape& tape, std::span<const double> t, std::span<const double> prev_t) const;
  ad::Var embed_one(ad::Tape& tape, double t, double prev_t) const;

  TimeEmbedMode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }

 private:
  TimeEmbedMode mode_;
  std::size_t dim_;
  ParamTensor* w_ = nullptr;
  ParamTensor* b_ = nullptr;
  ParamTensor* w2_ = nullptr;
  ParamTensor* b2_ = nullptr;
};

}  // namespace taltpp

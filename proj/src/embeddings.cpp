#include "taltpp/embeddings.hpp"

#include <cctype>
#include <cmath>

namespace taltpp {

TokenVocab::TokenVocab() { add(kPadToken); }

std::size_t TokenVocab::id(const std::string& tok) const {
  auto it = ids_.find(tok);
  if (it == ids_.end()) throw ValidationError("closed vocabulary: unknown token '" + tok + "'");
  return it->second;
}

std::size_t TokenVocab::add(const std::string& tok) {
  if (auto it = ids_.find(tok); it != ids_.end()) return it->second;
  ids_.emplace(tok, tokens_.size());
  tokens_.push_back(tok);
  return tokens_.size() - 1;
}

nlohmann::json TokenVocab::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j;
}

TokenVocab TokenVocab::from_json(const nlohmann::json& j) {
  std::vector<std::string> by_id(j.size());
  for (const auto& [tok, id] : j.items()) {
    const auto i = id.get<std::size_t>();
    if (i >= by_id.size() || !by_id[i].empty()) throw ParseError("token vocabulary ids are not a bijection onto 0..V-1");
    by_id[i] = tok;
  }
  if (by_id.empty() || by_id[kPadId] != kPadToken) throw ParseError("token vocabulary must map <pad> to 0");
  TokenVocab v;
  for (std::size_t i = 1; i < by_id.size(); ++i) v.add(by_id[i]);
  return v;
}

std::vector<std::string> split_type_text(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::size_t> tokenize_type(const std::string& type_text, TokenVocab& vocab, bool build) {
  if (!build) return tokenize_type(type_text, static_cast<const TokenVocab&>(vocab));
  const auto words = split_type_text(type_text);
  if (words.empty()) throw ValidationError("type name '" + type_text + "' has no tokens");
  std::vector<std::size_t> ids;
  for (const auto& w : words) ids.push_back(vocab.add(w));
  return ids;
}

std::vector<std::size_t> tokenize_type(const std::string& type_text, const TokenVocab& vocab) {
  const auto words = split_type_text(type_text);
  if (words.empty()) throw ValidationError("type name '" + type_text + "' has no tokens");
  std::vector<std::size_t> ids;
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

ad::Var embed_tokens(std::span<const std::size_t> ids, ad::Var table) {
  for (std::size_t id : ids)
    if (id >= table.rows()) throw std::out_of_range("embed_tokens: token id " + std::to_string(id) + " >= vocabulary size");
  return ad::gather_rows(table, ids);
}

const char* to_string(TimeEmbedMode m) {
  switch (m) {
    case TimeEmbedMode::linear: return "linear";
    case TimeEmbedMode::sinusoidal: return "sin";
    case TimeEmbedMode::interval_mlp: return "interval";
  }
  return "?";
}

TimeEmbedMode time_embed_mode_from_string(const std::string& s) {
  if (s == "linear") return TimeEmbedMode::linear;
  if (s == "sin" || s == "sinusoidal") return TimeEmbedMode::sinusoidal;
  if (s == "interval" || s == "interval_mlp") return TimeEmbedMode::interval_mlp;
  throw ConfigError("unknown time embedding '" + s + "' (expected linear|sin|interval)");
}

TemporalEmbedder::TemporalEmbedder(ParamSet& params, const std::string& prefix, TimeEmbedMode mode, std::size_t dim, Rng& init)
    : mode_(mode), dim_(dim) {
  if (dim == 0) throw ConfigError("temporal embedding dimension must be positive");
  switch (mode) {
    case TimeEmbedMode::linear:
      w_ = &params.add(prefix + ".w", init_projection(1, dim, init));
      b_ = &params.add(prefix + ".b", Matrix(1, dim));
      break;
    case TimeEmbedMode::sinusoidal:
      if (dim % 2 != 0) throw ConfigError("sinusoidal time embedding needs an even dimension, got " + std::to_string(dim));
      break;
    case TimeEmbedMode::interval_mlp:
      w_ = &params.add(prefix + ".w1", init_projection(2, dim, init));
      b_ = &params.add(prefix + ".b1", Matrix(1, dim));
      w2_ = &params.add(prefix + ".w2", init_projection(dim, dim, init));
      b2_ = &params.add(prefix + ".b2", Matrix(1, dim));
      break;
  }
}

ad::Var TemporalEmbedder::embed(ad::Tape& tape, std::span<const double> t, std::span<const double> prev_t) const {
  if (t.size() != prev_t.size()) throw std::invalid_argument("temporal embed: t and prev_t lengths differ");
  const std::size_t n = t.size();
  switch (mode_) {
    case TimeEmbedMode::linear: {
      Matrix tc(n, 1);
      for (std::size_t i = 0; i < n; ++i) tc[i] = t[i];
      return ad::linear(tape.constant(std::move(tc)), tape.param(*w_), tape.param(*b_));
    }
    case TimeEmbedMode::sinusoidal: {
      Matrix out(n, dim_);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < dim_ / 2; ++f) {
          const double freq = std::pow(10000.0, -2.0 * static_cast<double>(f) / static_cast<double>(dim_));
          out(i, 2 * f) = std::sin(t[i] * freq);
          out(i, 2 * f + 1) = std::cos(t[i] * freq);
        }
      return tape.constant(std::move(out));
    }
    case TimeEmbedMode::interval_mlp: {
      Matrix in(n, 2);
      for (std::size_t i = 0; i < n; ++i) {
        if (t[i] < prev_t[i]) throw std::invalid_argument("temporal embed: t precedes prev_t");
        in(i, 0) = t[i];
        in(i, 1) = t[i] - prev_t[i];
      }
      ad::Var hidden = ad::tanh(ad::linear(tape.constant(std::move(in)), tape.param(*w_), tape.param(*b_)));
      return ad::linear(hidden, tape.param(*w2_), tape.param(*b2_));
    }
  }
  throw std::logic_error("unreachable");
}

ad::Var TemporalEmbedder::embed_one(ad::Tape& tape, double t, double prev_t) const {
  const double ts[1] = {t};
  const double ps[1] = {prev_t};
  return embed(tape, ts, ps);
}

}  // namespace taltpp

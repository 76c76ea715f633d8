#include "taltpp/tcf.hpp"

namespace taltpp {

const char* to_string(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::additive: return "additive";
    case FusionMode::concat: return "concat";
    case FusionMode::cross_attention: return "xattn";
  }
  return "?";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "none") return FusionMode::none;
  if (s == "additive" || s == "add") return FusionMode::additive;
  if (s == "concat" || s == "concatenation") return FusionMode::concat;
  if (s == "xattn" || s == "cross_attention") return FusionMode::cross_attention;
  throw ConfigError("unknown fusion mode '" + s + "' (expected none|additive|concat|xattn)");
}

void TcfConfig::validate() const {
  if (dim < 2) throw ConfigError("tcf: dimension must be at least 2");
  if (mode == FusionMode::cross_attention && (heads == 0 || dim % heads != 0))
    throw ConfigError("tcf: dimension " + std::to_string(dim) + " is not divisible by " + std::to_string(heads) + " heads");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("tcf: dropout must lie in [0, 1)");
}

Tcf::Tcf(ParamSet& params, const std::string& prefix, const TcfConfig& cfg, Rng& init)
    : cfg_(cfg), params_(&params), prefix_(prefix) {
  cfg_.validate();
  const std::size_t d = cfg.dim;
  switch (cfg.mode) {
    case FusionMode::none:
      return;
    case FusionMode::additive:
      params.add(prefix + ".wt", init_projection(d, d, init));
      break;
    case FusionMode::concat:
      params.add(prefix + ".wc", init_projection(2 * d, d, init));
      break;
    case FusionMode::cross_attention:
      params.add(prefix + ".wq", init_projection(d, d, init));
      params.add(prefix + ".wk", init_projection(d, d, init));
      params.add(prefix + ".wv", init_projection(d, d, init));
      params.add(prefix + ".wo", init_projection(d, d, init));
      break;
  }
  params.add(prefix + ".ln.gamma", Matrix(1, d, 1.0));
  params.add(prefix + ".ln.beta", Matrix(1, d));
}

ad::Var Tcf::norm(ad::Tape& tape, ad::Var x) const {
  return ad::layer_norm(x, tape.param(params_->at(prefix_ + ".ln.gamma")), tape.param(params_->at(prefix_ + ".ln.beta")));
}

std::vector<std::size_t> token_owner(std::span<const std::size_t> offsets) {
  std::vector<std::size_t> owner;
  for (std::size_t e = 0; e + 1 < offsets.size(); ++e)
    for (std::size_t r = offsets[e]; r < offsets[e + 1]; ++r) owner.push_back(e);
  return owner;
}

ad::Var Tcf::fuse(ad::Tape& tape, ad::Var tokens, ad::Var time_emb, std::span<const std::size_t> offsets, bool training,
                  Rng& rng, ad::AttentionWeights* attn_out) const {
  if (offsets.size() != time_emb.rows() + 1 || offsets.back() != tokens.rows())
    throw std::invalid_argument("tcf: offsets do not match token/event counts");
  if (tokens.cols() != cfg_.dim || time_emb.cols() != cfg_.dim) throw std::invalid_argument("tcf: width mismatch");
  const std::vector<std::size_t> owner = token_owner(offsets);
  auto P = [&](const char* name) { return tape.param(params_->at(prefix_ + name)); };

  switch (cfg_.mode) {
    case FusionMode::none:
      return tokens;
    case FusionMode::additive: {
      ad::Var shift = ad::gather_rows(ad::matmul(time_emb, P(".wt")), owner);
      return norm(tape, ad::add(tokens, ad::dropout(shift, cfg_.dropout, training, rng)));
    }
    case FusionMode::concat: {
      ad::Var joined = ad::concat_cols(tokens, ad::gather_rows(time_emb, owner));
      ad::Var branch = ad::matmul(joined, P(".wc"));
      return norm(tape, ad::add(tokens, ad::dropout(branch, cfg_.dropout, training, rng)));
    }
    case FusionMode::cross_attention: {
      ad::Var q = ad::matmul(tokens, P(".wq"));
      ad::Var k = ad::matmul(time_emb, P(".wk"));
      ad::Var v = ad::matmul(time_emb, P(".wv"));
      // one key/value per event: token r sees only its own event's time token
      ad::AttentionSpec spec;
      spec.heads = cfg_.heads;
      spec.key_begin = owner;
      spec.key_end.resize(owner.size());
      for (std::size_t r = 0; r < owner.size(); ++r) spec.key_end[r] = owner[r] + 1;
      ad::Var attn = ad::attention(q, k, v, spec, nullptr, attn_out);
      ad::Var branch = ad::matmul(attn, P(".wo"));
      return norm(tape, ad::add(tokens, ad::dropout(branch, cfg_.dropout, training, rng)));
    }
  }
  throw std::logic_error("unreachable");
}

ad::Var pool_event(ad::Var tokens, std::span<const std::size_t> offsets) { return ad::segment_mean(tokens, offsets); }

}  // namespace taltpp

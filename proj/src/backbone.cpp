#include "taltpp/backbone.hpp"

namespace taltpp {

void BackboneConfig::validate() const {
  if (heads == 0 || dim % heads != 0) throw ConfigError("backbone: dimension must be divisible by heads");
  if (layers > 0 && ffn == 0) throw ConfigError("backbone: FFN width must be positive");
}

SegmentMap plan_segments(std::size_t prompt_len, std::span<const std::size_t> token_counts) {
  SegmentMap m;
  m.prompt_len = prompt_len;
  std::size_t pos = prompt_len;
  for (std::size_t l : token_counts) {
    if (l == 0) throw std::invalid_argument("plan_segments: event with no tokens");
    m.events.push_back({pos, pos + l + 1});
    pos += l + 2;
  }
  m.total = pos;
  return m;
}

AssembledInput assemble_input(const ad::Var* prompt, ad::Var time_emb, ad::Var semantic,
                              std::span<const std::size_t> offsets, ad::Var refined) {
  const std::size_t d = time_emb.cols();
  const std::size_t n = time_emb.rows();
  if (semantic.cols() != d || refined.cols() != d || (prompt && prompt->cols() != d))
    throw std::invalid_argument("assemble_input: width mismatch");
  if (refined.rows() != n || offsets.size() != n + 1 || offsets.back() != semantic.rows())
    throw std::invalid_argument("assemble_input: event count mismatch");

  const std::size_t plen = prompt ? prompt->rows() : 0;
  std::vector<std::size_t> counts(n);
  for (std::size_t i = 0; i < n; ++i) counts[i] = offsets[i + 1] - offsets[i];
  SegmentMap seg = plan_segments(plen, counts);

  // rows of concat_rows([P, E, X, S']) in assembly order
  std::vector<ad::Var> parts;
  if (plen) parts.push_back(*prompt);
  parts.insert(parts.end(), {time_emb, semantic, refined});
  const std::size_t e_base = plen, x_base = plen + n, s_base = plen + n + semantic.rows();
  std::vector<std::size_t> order;
  order.reserve(seg.total);
  for (std::size_t p = 0; p < plen; ++p) order.push_back(p);
  for (std::size_t i = 0; i < n; ++i) {
    order.push_back(e_base + i);
    for (std::size_t r = offsets[i]; r < offsets[i + 1]; ++r) order.push_back(x_base + r);
    order.push_back(s_base + i);
  }
  return {ad::gather_rows(ad::concat_rows(parts), order), std::move(seg)};
}

Backbone::Backbone(ParamSet& params, const std::string& prefix, const BackboneConfig& cfg, Rng& init)
    : cfg_(cfg), params_(&params), prefix_(prefix) {
  cfg_.validate();
  const std::size_t d = cfg.dim;
  if (cfg.prompt_len) params.add(prefix + ".prompt", init_embedding(cfg.prompt_len, d, init));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    params.add(p + ".ln1.gamma", Matrix(1, d, 1.0));
    params.add(p + ".ln1.beta", Matrix(1, d));
    params.add(p + ".wq", init_projection(d, d, init));
    params.add(p + ".wk", init_projection(d, d, init));
    params.add(p + ".wv", init_projection(d, d, init));
    params.add(p + ".wo", init_projection(d, d, init));
    params.add(p + ".ln2.gamma", Matrix(1, d, 1.0));
    params.add(p + ".ln2.beta", Matrix(1, d));
    params.add(p + ".ffn.w1", init_projection(d, cfg.ffn, init));
    params.add(p + ".ffn.b1", Matrix(1, cfg.ffn));
    params.add(p + ".ffn.w2", init_projection(cfg.ffn, d, init));
    params.add(p + ".ffn.b2", Matrix(1, d));
  }
}

ad::Var Backbone::prompt(ad::Tape& tape) const { return tape.param(params_->at(prefix_ + ".prompt")); }

ad::Var Backbone::encode(ad::Tape& tape, ad::Var tokens) const {
  const std::size_t n = tokens.rows();
  const ad::AttentionSpec mask = cfg_.causal ? ad::AttentionSpec::causal(cfg_.heads, n) : ad::AttentionSpec::full(cfg_.heads, n, n);
  ad::Var x = tokens;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = prefix_ + "." + std::to_string(l);
    auto P = [&](const char* name) { return tape.param(params_->at(p + name)); };
    ad::Var h = ad::layer_norm(x, P(".ln1.gamma"), P(".ln1.beta"));
    ad::Var att = ad::attention(ad::matmul(h, P(".wq")), ad::matmul(h, P(".wk")), ad::matmul(h, P(".wv")), mask);
    x = ad::add(x, ad::matmul(att, P(".wo")));
    h = ad::layer_norm(x, P(".ln2.gamma"), P(".ln2.beta"));
    x = ad::add(x, ad::linear(ad::gelu(ad::linear(h, P(".ffn.w1"), P(".ffn.b1"))), P(".ffn.w2"), P(".ffn.b2")));
  }
  return x;
}

ad::Var Backbone::encode_context(ad::Tape& tape, ad::Var tokens, const SegmentMap& segments) const {
  if (tokens.rows() != segments.total) throw std::invalid_argument("encode_context: token count does not match segment map");
  ad::Var hidden = encode(tape, tokens);
  std::vector<std::size_t> rows;
  for (const auto& r : segments.events) rows.push_back(r.last);
  if (segments.prompt_len == 0) {
    const ad::Var parts[2] = {tape.constant(Matrix(1, tokens.cols())), ad::gather_rows(hidden, rows)};
    return ad::concat_rows(parts);
  }
  rows.insert(rows.begin(), segments.prompt_len - 1);
  return ad::gather_rows(hidden, rows);
}

}  // namespace taltpp

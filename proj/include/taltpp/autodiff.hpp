#pragma once

// Tape-based reverse-mode differentiation over dense matrices.
//
// A Tape records nodes in creation order, which is a valid topological order,
// so backward() is a single reverse sweep. Parameters are bound into a tape as
// leaves with their own gradient buffers; accumulate_param_grads() adds those
// buffers into the persistent ParamTensor accumulators. Distinct tapes share no
// mutable state, so forward/backward of distinct sequences may run on separate
// threads as long as the final accumulation is serialized.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "taltpp/matrix.hpp"
#include "taltpp/rng.hpp"

namespace taltpp {

// Learnable dense array with an attached gradient accumulator.
struct ParamTensor {
  std::string name;
  Matrix value;
  Matrix grad;
  bool requires_grad = true;

  ParamTensor(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() { grad.fill(0.0); }
};

// Ordered registry of parameters keyed by dotted path ("mtbt.0.attn.wq").
class ParamSet {
 public:
  ParamTensor& add(const std::string& name, Matrix init);
  ParamTensor* find(const std::string& name);
  const ParamTensor* find(const std::string& name) const;
  ParamTensor& at(const std::string& name);

  std::span<const std::unique_ptr<ParamTensor>> all() const { return params_; }
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<ParamTensor>> params_;
  std::unordered_map<std::string, ParamTensor*> index_;
};

// N(0, 1/fan_in) projection, zero bias, N(0, 0.02^2) embedding.
Matrix init_projection(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Matrix init_embedding(std::size_t rows, std::size_t cols, Rng& rng);

namespace ad {

class Tape;

struct Node {
  Matrix value;
  Matrix grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::function<void(Node&)> backward;
  ParamTensor* param = nullptr;

  Matrix& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value[0]; }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return node_ != nullptr; }

  Tape* tape() const { return tape_; }
  Node* node() const { return node_; }

 private:
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value, bool requires_grad = true);
  // Binds a parameter once per tape; repeated calls return the same leaf.
  Var param(ParamTensor& p);

  // Records a node whose gradient flows to `parents`.
  Var record(Matrix value, std::initializer_list<Var> parents, std::function<void(Node&)> backward);
  Var record(Matrix value, std::span<const Var> parents, std::function<void(Node&)> backward);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Loss must be 1x1.
  void backward(const Var& loss);
  // p.grad += bound leaf gradient, in binding order.
  void accumulate_param_grads() const;
  std::vector<std::pair<ParamTensor*, const Matrix*>> param_grads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  Node* push(Matrix value);

  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<std::pair<ParamTensor*, Node*>> bound_;
  std::unordered_map<const ParamTensor*, Node*> bound_index_;
};

// ---- differentiable operations ----------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// Adds a 1 x n row to every row of a.
Var add_row(Var a, Var row);
// x W + b with W (in x out), b (1 x out).
Var linear(Var x, Var w, Var b);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(Var src, std::span<const std::size_t> index);
// offsets has S+1 entries; output row s is the mean of rows [offsets[s], offsets[s+1]).
Var segment_mean(Var x, std::span<const std::size_t> offsets);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var dropout(Var x, double p, bool training, Rng& rng);
Var tanh(Var x);
Var gelu(Var x);
// (1/s) log(1 + exp(s x))
Var softplus(Var x, double sharpness = 1.0);
Var log(Var x);
Var square(Var x);
Var softmax_rows(Var x);
Var sum(Var x);
Var mean(Var x);
// sum_ij x_ij w_ij with constant weights
Var weighted_sum(Var x, const Matrix& w);
// out[r] = x[r, cols[r]], shape R x 1
Var pick(Var x, std::span<const std::size_t> cols);
// Sum over rows of -log softmax(logits)[r, target[r]].
Var cross_entropy_sum(Var logits, std::span<const std::size_t> targets);
// out[m, k] = base[rows[m], k] + slope[0, k] * offsets[m]
Var affine_time_expand(Var base, Var slope, std::span<const std::size_t> rows, std::span<const double> offsets);

// Multi-head scaled dot-product attention. Query row i may attend keys in
// [key_begin[i], key_end[i]); everything else is masked to -inf before the
// softmax and contributes exactly zero. Optional additive bias has shape
// (Nq*Nk) x H, row i*Nk + j holding the per-head offsets for pair (i, j).
struct AttentionSpec {
  std::size_t heads = 1;
  std::vector<std::size_t> key_begin;
  std::vector<std::size_t> key_end;

  static AttentionSpec full(std::size_t heads, std::size_t nq, std::size_t nk);
  static AttentionSpec causal(std::size_t heads, std::size_t n);
};

// Per-head attention weights, heads x (Nq x Nk), zero outside the mask.
using AttentionWeights = std::vector<Matrix>;

Var attention(Var q, Var k, Var v, const AttentionSpec& spec, const Var* bias = nullptr,
              AttentionWeights* weights_out = nullptr);

}  // namespace ad
}  // namespace taltpp

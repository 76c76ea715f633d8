#include "taltpp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "taltpp/kernels.hpp"

namespace taltpp {

ParamTensor& ParamSet::add(const std::string& name, Matrix init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
  params_.push_back(std::make_unique<ParamTensor>(name, std::move(init)));
  index_[name] = params_.back().get();
  return *params_.back();
}

ParamTensor* ParamSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

const ParamTensor* ParamSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

ParamTensor& ParamSet::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter: " + name);
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

Matrix init_projection(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Matrix m(fan_in, fan_out);
  const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : m.flat()) x = rng.normal(0.0, sd);
  return m;
}

Matrix init_embedding(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& x : m.flat()) x = rng.normal(0.0, 0.02);
  return m;
}

namespace ad {

// ---- tape ---------------------------------------------------------------

Node* Tape::push(Matrix value) {
  nodes_.push_back(std::make_unique<Node>());
  nodes_.back()->value = std::move(value);
  return nodes_.back().get();
}

Var Tape::constant(Matrix value) { return {this, push(std::move(value))}; }

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node* n = push(std::move(value));
  n->requires_grad = requires_grad;
  return {this, n};
}

Var Tape::param(ParamTensor& p) {
  if (auto it = bound_index_.find(&p); it != bound_index_.end()) return {this, it->second};
  Node* n = push(p.value);
  n->requires_grad = p.requires_grad;
  n->param = &p;
  bound_.emplace_back(&p, n);
  bound_index_[&p] = n;
  return {this, n};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, std::function<void(Node&)> backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> parents, std::function<void(Node&)> backward) {
  Node* n = push(std::move(value));
  for (const Var& p : parents) {
    if (p.tape() != this) throw std::logic_error("autodiff: operands recorded on different tapes");
    n->requires_grad = n->requires_grad || p.requires_grad();
  }
  if (n->requires_grad) n->backward = std::move(backward);
  return {this, n};
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::logic_error("backward: loss belongs to another tape");
  if (loss.value().size() != 1) throw std::invalid_argument("backward: loss must be a scalar");
  Node* root = loss.node();
  if (!root->requires_grad) return;
  root->grad_buffer()[0] += 1.0;
  auto it = std::find_if(nodes_.begin(), nodes_.end(), [root](const auto& n) { return n.get() == root; });
  for (auto rit = std::make_reverse_iterator(std::next(it)); rit != nodes_.rend(); ++rit) {
    Node& n = **rit;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

void Tape::accumulate_param_grads() const {
  for (const auto& [p, n] : bound_) {
    if (n->grad.empty()) continue;
    kernels::active().axpy(1.0, n->grad.data(), p->grad.data(), p->grad.size());
  }
}

std::vector<std::pair<ParamTensor*, const Matrix*>> Tape::param_grads() const {
  std::vector<std::pair<ParamTensor*, const Matrix*>> out;
  for (const auto& [p, n] : bound_)
    if (!n->grad.empty()) out.emplace_back(p, &n->grad);
  return out;
}

// ---- helpers --------------------------------------------------------------

namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
}

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw std::invalid_argument("autodiff: uninitialized Var");
  return *v.tape();
}

bool wants(const Node* n) { return n->requires_grad; }

void add_into(Matrix& dst, const Matrix& src, double a = 1.0) {
  kernels::active().axpy(a, src.data(), dst.data(), dst.size());
}

template <class F>
Var unary(Var x, F f, std::function<void(Node&, Node*)> bwd) {
  Matrix out(x.rows(), x.cols());
  const Matrix& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Node* xn = x.node();
  return tape_of(x).record(std::move(out), {x}, [xn, bwd = std::move(bwd)](Node& self) { bwd(self, xn); });
}

}  // namespace

// ---- elementwise and linear algebra ----------------------------------------

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", "inner dimensions " + a.value().shape_str() + " * " + b.value().shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Matrix out(m, n);
  kernels::active().gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a).record(std::move(out), {a, b}, [an, bn, m, k, n](Node& self) {
    const auto& kt = kernels::active();
    if (wants(an)) kt.gemm_nt(self.grad.data(), bn->value.data(), an->grad_buffer().data(), m, n, k);
    if (wants(bn)) kt.gemm_tn(an->value.data(), self.grad.data(), bn->grad_buffer().data(), k, m, n);
  });
}

Var add(Var a, Var b) {
  require(a.value().same_shape(b.value()), "add", "shape mismatch");
  Matrix out = a.value();
  add_into(out, b.value());
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a).record(std::move(out), {a, b}, [an, bn](Node& self) {
    if (wants(an)) add_into(an->grad_buffer(), self.grad);
    if (wants(bn)) add_into(bn->grad_buffer(), self.grad);
  });
}

Var sub(Var a, Var b) {
  require(a.value().same_shape(b.value()), "sub", "shape mismatch");
  Matrix out = a.value();
  add_into(out, b.value(), -1.0);
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a).record(std::move(out), {a, b}, [an, bn](Node& self) {
    if (wants(an)) add_into(an->grad_buffer(), self.grad);
    if (wants(bn)) add_into(bn->grad_buffer(), self.grad, -1.0);
  });
}

Var mul(Var a, Var b) {
  require(a.value().same_shape(b.value()), "mul", "shape mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a).record(std::move(out), {a, b}, [an, bn](Node& self) {
    if (wants(an)) {
      Matrix& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (wants(bn)) {
      Matrix& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](Node& self, Node* xn) { add_into(xn->grad_buffer(), self.grad, c); });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", "row must be 1 x " + std::to_string(a.cols()));
  Matrix out = a.value();
  const std::size_t n = a.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) kernels::active().axpy(1.0, row.value().data(), out.data() + r * n, n);
  Node* an = a.node();
  Node* rn = row.node();
  return tape_of(a).record(std::move(out), {a, row}, [an, rn, n](Node& self) {
    if (wants(an)) add_into(an->grad_buffer(), self.grad);
    if (wants(rn)) {
      Matrix& g = rn->grad_buffer();
      for (std::size_t r = 0; r < self.grad.rows(); ++r) kernels::active().axpy(1.0, self.grad.data() + r * n, g.data(), n);
    }
  });
}

Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

Var concat_cols(Var a, Var b) {
  require(a.rows() == b.rows(), "concat_cols", "row counts differ");
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  Matrix out(r, ca + cb);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.value().data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.value().data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  Node* an = a.node();
  Node* bn = b.node();
  return tape_of(a).record(std::move(out), {a, b}, [an, bn, r, ca, cb](Node& self) {
    for (std::size_t i = 0; i < r; ++i) {
      const double* g = self.grad.data() + i * (ca + cb);
      if (wants(an)) kernels::active().axpy(1.0, g, an->grad_buffer().data() + i * ca, ca);
      if (wants(bn)) kernels::active().axpy(1.0, g + ca, bn->grad_buffer().data() + i * cb, cb);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows", "no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == c, "concat_rows", "column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, c);
  std::vector<Node*> nodes;
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + off);
    off += p.value().size();
    nodes.push_back(p.node());
  }
  return tape_of(parts[0]).record(std::move(out), parts, [nodes](Node& self) {
    std::size_t off = 0;
    for (Node* n : nodes) {
      if (wants(n)) kernels::active().axpy(1.0, self.grad.data() + off, n->grad_buffer().data(), n->value.size());
      off += n->value.size();
    }
  });
}

Var gather_rows(Var src, std::span<const std::size_t> index) {
  const std::size_t c = src.cols();
  Matrix out(index.size(), c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < src.rows(), "gather_rows", "index " + std::to_string(index[i]) + " out of range " + std::to_string(src.rows()));
    std::copy_n(src.value().data() + index[i] * c, c, out.data() + i * c);
  }
  Node* sn = src.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return tape_of(src).record(std::move(out), {src}, [sn, idx = std::move(idx), c](Node& self) {
    Matrix& g = sn->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) kernels::active().axpy(1.0, self.grad.data() + i * c, g.data() + idx[i] * c, c);
  });
}

Var segment_mean(Var x, std::span<const std::size_t> offsets) {
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == x.rows(), "segment_mean", "offsets must span all rows");
  const std::size_t s = offsets.size() - 1, c = x.cols();
  Matrix out(s, c);
  for (std::size_t k = 0; k < s; ++k) {
    require(offsets[k + 1] > offsets[k], "segment_mean", "empty segment");
    const double inv = 1.0 / static_cast<double>(offsets[k + 1] - offsets[k]);
    for (std::size_t r = offsets[k]; r < offsets[k + 1]; ++r)
      for (std::size_t j = 0; j < c; ++j) out(k, j) += x.value()(r, j);
    for (std::size_t j = 0; j < c; ++j) out(k, j) *= inv;
  }
  Node* xn = x.node();
  std::vector<std::size_t> offs(offsets.begin(), offsets.end());
  return tape_of(x).record(std::move(out), {x}, [xn, offs = std::move(offs), c](Node& self) {
    Matrix& g = xn->grad_buffer();
    for (std::size_t k = 0; k + 1 < offs.size(); ++k) {
      const double inv = 1.0 / static_cast<double>(offs[k + 1] - offs[k]);
      for (std::size_t r = offs[k]; r < offs[k + 1]; ++r) kernels::active().axpy(inv, self.grad.data() + k * c, g.data() + r * c, c);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const std::size_t r = x.rows(), c = x.cols();
  require(c >= 2, "layer_norm", "last dimension must be at least 2");
  require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c, "layer_norm", "affine shape");
  Matrix xhat(r, c), out(r, c);
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const auto row = x.value().row(i);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(i, j) = (row[j] - mu) * inv_std[i];
      out(i, j) = xhat(i, j) * gamma.value()[j] + beta.value()[j];
    }
  }
  Node* xn = x.node();
  Node* gn = gamma.node();
  Node* bn = beta.node();
  return tape_of(x).record(std::move(out), {x, gamma, beta},
                           [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), r, c](Node& self) {
                             const Matrix& dy = self.grad;
                             if (wants(gn) || wants(bn)) {
                               Matrix& gg = gn->grad_buffer();
                               Matrix& gb = bn->grad_buffer();
                               for (std::size_t i = 0; i < r; ++i)
                                 for (std::size_t j = 0; j < c; ++j) {
                                   gg[j] += dy(i, j) * xhat(i, j);
                                   gb[j] += dy(i, j);
                                 }
                             }
                             if (!wants(xn)) return;
                             Matrix& gx = xn->grad_buffer();
                             std::vector<double> dxhat(c);
                             for (std::size_t i = 0; i < r; ++i) {
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t j = 0; j < c; ++j) {
                                 dxhat[j] = dy(i, j) * gn->value[j];
                                 m1 += dxhat[j];
                                 m2 += dxhat[j] * xhat(i, j);
                               }
                               m1 /= static_cast<double>(c);
                               m2 /= static_cast<double>(c);
                               for (std::size_t j = 0; j < c; ++j) gx(i, j) += inv_std[i] * (dxhat[j] - m1 - xhat(i, j) * m2);
                             }
                           });
}

Var dropout(Var x, double p, bool training, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout", "p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  Matrix mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask.flat()) m = rng.bernoulli(p) ? 0.0 : keep;
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * mask[i];
  Node* xn = x.node();
  return tape_of(x).record(std::move(out), {x}, [xn, mask = std::move(mask)](Node& self) {
    Matrix& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](Node& self, Node* xn) {
    Matrix& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); },
      [](Node& self, Node* xn) {
        Matrix& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double v = xn->value[i];
          const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
          const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
          g[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
        }
      });
}

Var softplus(Var x, double sharpness) {
  require(sharpness > 0.0, "softplus", "sharpness must be positive");
  const double s = sharpness;
  return unary(
      x,
      [s](double v) {
        const double z = s * v;
        return (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))) / s;
      },
      [s](Node& self, Node* xn) {
        Matrix& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double z = s * xn->value[i];
          const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
          g[i] += self.grad[i] * sig;
        }
      });
}

Var log(Var x) {
  for (double v : x.value().flat()) require(v > 0.0, "log", "non-positive input");
  return unary(x, [](double v) { return std::log(v); }, [](Node& self, Node* xn) {
    Matrix& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / xn->value[i];
  });
}

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](Node& self, Node* xn) {
    Matrix& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[i] * xn->value[i];
  });
}

namespace {

// Stable softmax of a contiguous range, written into out.
void softmax_span(const double* x, double* out, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, x[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(x[j] - mx);
    z += out[j];
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
}

}  // namespace

Var softmax_rows(Var x) {
  const std::size_t r = x.rows(), c = x.cols();
  Matrix out(r, c);
  for (std::size_t i = 0; i < r; ++i) softmax_span(x.value().data() + i * c, out.data() + i * c, c);
  Node* xn = x.node();
  return tape_of(x).record(std::move(out), {x}, [xn, r, c](Node& self) {
    Matrix& g = xn->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      const double* y = self.value.data() + i * c;
      const double* dy = self.grad.data() + i * c;
      double dotv = 0.0;
      for (std::size_t j = 0; j < c; ++j) dotv += y[j] * dy[j];
      for (std::size_t j = 0; j < c; ++j) g(i, j) += y[j] * (dy[j] - dotv);
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().flat()) s += v;
  Node* xn = x.node();
  return tape_of(x).record(Matrix(1, 1, s), {x}, [xn](Node& self) {
    Matrix& g = xn->grad_buffer();
    const double d = self.grad[0];
    for (auto& v : g.flat()) v += d;
  });
}

Var mean(Var x) {
  require(x.value().size() > 0, "mean", "empty input");
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var weighted_sum(Var x, const Matrix& w) {
  require(x.value().same_shape(w), "weighted_sum", "weight shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += x.value()[i] * w[i];
  Node* xn = x.node();
  return tape_of(x).record(Matrix(1, 1, s), {x}, [xn, w](Node& self) { add_into(xn->grad_buffer(), w, self.grad[0]); });
}

Var pick(Var x, std::span<const std::size_t> cols) {
  require(cols.size() == x.rows(), "pick", "one column per row required");
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    require(cols[r] < x.cols(), "pick", "column out of range");
    out[r] = x.value()(r, cols[r]);
  }
  Node* xn = x.node();
  std::vector<std::size_t> cs(cols.begin(), cols.end());
  return tape_of(x).record(std::move(out), {x}, [xn, cs = std::move(cs)](Node& self) {
    Matrix& g = xn->grad_buffer();
    for (std::size_t r = 0; r < cs.size(); ++r) g(r, cs[r]) += self.grad[r];
  });
}

Var cross_entropy_sum(Var logits, std::span<const std::size_t> targets) {
  const std::size_t r = logits.rows(), c = logits.cols();
  require(targets.size() == r, "cross_entropy_sum", "one target per row required");
  Matrix probs(r, c);
  double loss = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    require(targets[i] < c, "cross_entropy_sum", "target out of range");
    softmax_span(logits.value().data() + i * c, probs.data() + i * c, c);
    // log-sum-exp form keeps the loss finite when a probability underflows
    const auto row = logits.value().row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    loss += mx + std::log(z) - row[targets[i]];
  }
  Node* ln = logits.node();
  std::vector<std::size_t> ts(targets.begin(), targets.end());
  return tape_of(logits).record(Matrix(1, 1, loss), {logits}, [ln, probs = std::move(probs), ts = std::move(ts), c](Node& self) {
    Matrix& g = ln->grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < ts.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g(i, j) += d * (probs(i, j) - (j == ts[i] ? 1.0 : 0.0));
  });
}

Var affine_time_expand(Var base, Var slope, std::span<const std::size_t> rows, std::span<const double> offsets) {
  const std::size_t k = base.cols();
  require(slope.rows() == 1 && slope.cols() == k, "affine_time_expand", "slope must be 1 x K");
  require(rows.size() == offsets.size(), "affine_time_expand", "rows/offsets length mismatch");
  Matrix out(rows.size(), k);
  for (std::size_t m = 0; m < rows.size(); ++m) {
    require(rows[m] < base.rows(), "affine_time_expand", "row out of range");
    for (std::size_t j = 0; j < k; ++j) out(m, j) = base.value()(rows[m], j) + slope.value()[j] * offsets[m];
  }
  Node* bn = base.node();
  Node* sn = slope.node();
  std::vector<std::size_t> rs(rows.begin(), rows.end());
  std::vector<double> os(offsets.begin(), offsets.end());
  return tape_of(base).record(std::move(out), {base, slope}, [bn, sn, rs = std::move(rs), os = std::move(os), k](Node& self) {
    for (std::size_t m = 0; m < rs.size(); ++m) {
      const double* g = self.grad.data() + m * k;
      if (wants(bn)) kernels::active().axpy(1.0, g, bn->grad_buffer().data() + rs[m] * k, k);
      if (wants(sn)) kernels::active().axpy(os[m], g, sn->grad_buffer().data(), k);
    }
  });
}

// ---- attention ----------------------------------------------------------------

AttentionSpec AttentionSpec::full(std::size_t heads, std::size_t nq, std::size_t nk) {
  AttentionSpec s;
  s.heads = heads;
  s.key_begin.assign(nq, 0);
  s.key_end.assign(nq, nk);
  return s;
}

AttentionSpec AttentionSpec::causal(std::size_t heads, std::size_t n) {
  AttentionSpec s;
  s.heads = heads;
  s.key_begin.assign(n, 0);
  s.key_end.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.key_end[i] = i + 1;
  return s;
}

Var attention(Var q, Var k, Var v, const AttentionSpec& spec, const Var* bias, AttentionWeights* weights_out) {
  const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols(), h = spec.heads;
  require(h >= 1 && d % h == 0, "attention", "model width must be divisible by heads");
  require(k.cols() == d && v.cols() == d && v.rows() == nk, "attention", "q/k/v shape mismatch");
  require(spec.key_begin.size() == nq && spec.key_end.size() == nq, "attention", "mask size must equal query count");
  if (bias) require(bias->rows() == nq * nk && bias->cols() == h, "attention", "bias must be (Nq*Nk) x heads");
  for (std::size_t i = 0; i < nq; ++i)
    require(spec.key_begin[i] < spec.key_end[i] && spec.key_end[i] <= nk, "attention",
            "query " + std::to_string(i) + " has no admissible key");

  const std::size_t dk = d / h;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const auto& kt = kernels::active();
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();

  AttentionWeights alpha(h, Matrix(nq, nk));
  Matrix out(nq, d);
  std::vector<double> scores(nk);
  for (std::size_t hh = 0; hh < h; ++hh) {
    const std::size_t off = hh * dk;
    for (std::size_t i = 0; i < nq; ++i) {
      const std::size_t b = spec.key_begin[i], e = spec.key_end[i];
      for (std::size_t j = b; j < e; ++j) {
        scores[j] = kt.dot(qv.data() + i * d + off, kv.data() + j * d + off, dk) * inv_sqrt;
        if (bias) scores[j] += bias->value()(i * nk + j, hh);
      }
      double* a = alpha[hh].data() + i * nk;
      softmax_span(scores.data() + b, a + b, e - b);
      double* o = out.data() + i * d + off;
      for (std::size_t j = b; j < e; ++j) kt.axpy(a[j], vv.data() + j * d + off, o, dk);
    }
  }
  if (weights_out) *weights_out = alpha;

  Node* qn = q.node();
  Node* kn = k.node();
  Node* vn = v.node();
  Node* bn = bias ? bias->node() : nullptr;
  std::vector<Var> parents{q, k, v};
  if (bias) parents.push_back(*bias);
  return tape_of(q).record(
      std::move(out), std::span<const Var>(parents),
      [qn, kn, vn, bn, alpha = std::move(alpha), spec, nq, nk, d, h, dk, inv_sqrt](Node& self) {
        const auto& kt = kernels::active();
        const bool gq = wants(qn), gk = wants(kn), gv = wants(vn), gb = bn && wants(bn);
        double* dq = gq ? qn->grad_buffer().data() : nullptr;
        double* dkm = gk ? kn->grad_buffer().data() : nullptr;
        double* dv = gv ? vn->grad_buffer().data() : nullptr;
        Matrix* db = gb ? &bn->grad_buffer() : nullptr;
        std::vector<double> da(nk), ds(nk);
        for (std::size_t hh = 0; hh < h; ++hh) {
          const std::size_t off = hh * dk;
          for (std::size_t i = 0; i < nq; ++i) {
            const std::size_t b = spec.key_begin[i], e = spec.key_end[i];
            const double* a = alpha[hh].data() + i * nk;
            const double* dout = self.grad.data() + i * d + off;
            double acc = 0.0;
            for (std::size_t j = b; j < e; ++j) {
              da[j] = kt.dot(dout, vn->value.data() + j * d + off, dk);
              acc += a[j] * da[j];
              if (gv) kt.axpy(a[j], dout, dv + j * d + off, dk);
            }
            for (std::size_t j = b; j < e; ++j) {
              ds[j] = a[j] * (da[j] - acc);
              if (db) (*db)(i * nk + j, hh) += ds[j];
              const double s = ds[j] * inv_sqrt;
              if (gq) kt.axpy(s, kn->value.data() + j * d + off, dq + i * d + off, dk);
              if (gk) kt.axpy(s, qn->value.data() + i * d + off, dkm + j * d + off, dk);
            }
          }
        }
      });
}

}  // namespace ad
}  // namespace taltpp

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "../support/op_catalog.hpp"
#include "taltpp/autodiff.hpp"
#include "taltpp/grad_check.hpp"
#include "taltpp/kernels.hpp"
#include "taltpp/matrix.hpp"
#include "taltpp/rng.hpp"

using namespace taltpp;
using taltpp::testing::random_matrix;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("matrix shape and element access") {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(m.row(1)[0] == 4);
  CHECK(m.shape_str() == "2x3");
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Matrix n = m;
  n(0, 0) = 1.5;
  CHECK(max_abs_diff(m, n) == doctest::Approx(0.5));
  CHECK_FALSE(m == n);
}

TEST_CASE("scalar and avx2 kernels agree") {
  const kernels::KernelTable& s = kernels::scalar_table();
  const kernels::KernelTable* v = kernels::avx2_table();
  if (!v) {
    MESSAGE("AVX2 unavailable; only the scalar set is exercised");
    return;
  }
  Rng rng(11);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 33u, 64u, 101u}) {
    const auto x = random_vec(n, rng), y = random_vec(n, rng);
    CHECK(rel_diff(s.dot(x.data(), y.data(), n), v->dot(x.data(), y.data(), n)) < 1e-13);
    auto ys = y, yv = y;
    s.axpy(0.37, x.data(), ys.data(), n);
    v->axpy(0.37, x.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(rel_diff(ys[i], yv[i]) < 1e-15);
  }
  for (std::size_t m : {1u, 2u, 5u}) {
    for (std::size_t k : {1u, 3u, 16u, 19u}) {
      for (std::size_t n : {1u, 4u, 16u, 17u, 35u}) {
        const Matrix a = random_matrix(m, k, rng), b = random_matrix(k, n, rng), bt = random_matrix(n, k, rng),
                     at = random_matrix(k, m, rng);
        Matrix c1(m, n), c2(m, n);
        s.gemm_nn(a.data(), b.data(), c1.data(), m, k, n);
        v->gemm_nn(a.data(), b.data(), c2.data(), m, k, n);
        CHECK(max_abs_diff(c1, c2) < 1e-12);
        c1.fill(0), c2.fill(0);
        s.gemm_nt(a.data(), bt.data(), c1.data(), m, k, n);
        v->gemm_nt(a.data(), bt.data(), c2.data(), m, k, n);
        CHECK(max_abs_diff(c1, c2) < 1e-12);
        c1.fill(0), c2.fill(0);
        s.gemm_tn(at.data(), b.data(), c1.data(), m, k, n);
        v->gemm_tn(at.data(), b.data(), c2.data(), m, k, n);
        CHECK(max_abs_diff(c1, c2) < 1e-12);
      }
    }
  }
}

TEST_CASE("gemm rows do not depend on neighbouring rows") {
  Rng rng(12);
  std::vector<const kernels::KernelTable*> tables{&kernels::scalar_table()};
  if (kernels::avx2_table()) tables.push_back(kernels::avx2_table());
  for (const auto* t : tables) {
    const Matrix a = random_matrix(7, 13, rng), b = random_matrix(13, 21, rng);
    Matrix full(7, 21);
    t->gemm_nn(a.data(), b.data(), full.data(), 7, 13, 21);
    for (std::size_t r = 0; r < 7; ++r) {
      Matrix one(1, 21);
      t->gemm_nn(a.data() + r * 13, b.data(), one.data(), 1, 13, 21);
      for (std::size_t j = 0; j < 21; ++j) CHECK(one(0, j) == full(r, j));
    }
  }
}

TEST_CASE("kernel selection") {
  CHECK(kernels::select("scalar"));
  CHECK(std::string(kernels::active().name) == "scalar");
  CHECK_FALSE(kernels::select("nonsense"));
  if (kernels::avx2_table()) {
    CHECK(kernels::select("avx2"));
    CHECK(std::string(kernels::active().name) == "avx2");
  }
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42, 1), b(42, 1), c(42, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    differs |= x != c.uniform();
  }
  CHECK(differs);
  Rng d(1);
  for (int i = 0; i < 1000; ++i) CHECK(d.index(7) < 7);
  CHECK(fnv1a64("abc") == fnv1a64("abc"));
  CHECK(fnv1a64("abc") != fnv1a64("abd"));
}

TEST_CASE("every differentiable op passes the gradient check") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (const auto& c : taltpp::testing::op_catalog(seed)) {
      CAPTURE(c.name);
      const GradCheckResult r = grad_check(c.fn, c.inputs);
      CAPTURE(r.worst);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error <= 1e-4);
    }
  }
}

TEST_CASE("gradient check flags a wrong backward rule") {
  ScalarFn broken = [](ad::Tape& tape, std::span<const ad::Var> in) {
    Matrix v = in[0].value();
    for (auto& x : v.flat()) x = x * x;
    ad::Var y = tape.record(std::move(v), {in[0]}, [x = in[0]](ad::Node& self) {
      Matrix& g = x.node()->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value()[i];  // missing factor 2
    });
    return ad::sum(y);
  };
  Rng rng(3);
  const GradCheckResult r = grad_check(broken, {random_matrix(2, 2, rng)});
  CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("grad check rejects non-finite objectives") {
  ScalarFn f = [](ad::Tape&, std::span<const ad::Var> in) { return ad::sum(ad::scale(in[0], 1e308 * 10)); };
  CHECK_THROWS_AS(grad_check(f, {Matrix(1, 1, 1.0)}), std::domain_error);
}

TEST_CASE("attention masks contribute exactly zero and rows sum to one") {
  Rng rng(7);
  ad::Tape tape;
  ad::Var q = tape.leaf(random_matrix(5, 4, rng)), k = tape.leaf(random_matrix(5, 4, rng)),
          v = tape.leaf(random_matrix(5, 4, rng));
  ad::AttentionWeights w;
  ad::attention(q, k, v, ad::AttentionSpec::causal(2, 5), nullptr, &w);
  REQUIRE(w.size() == 2);
  for (const auto& m : w)
    for (std::size_t i = 0; i < 5; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        if (j > i) CHECK(m(i, j) == 0.0);
        s += m(i, j);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero attention bias matches no bias bit for bit") {
  Rng rng(8);
  ad::Tape tape;
  ad::Var q = tape.leaf(random_matrix(4, 6, rng)), k = tape.leaf(random_matrix(4, 6, rng)),
          v = tape.leaf(random_matrix(4, 6, rng));
  ad::Var zero = tape.constant(Matrix(16, 3));
  const auto spec = ad::AttentionSpec::causal(3, 4);
  CHECK(ad::attention(q, k, v, spec).value() == ad::attention(q, k, v, spec, &zero).value());
}

TEST_CASE("layer norm normalizes each row") {
  Rng rng(9);
  ad::Tape tape;
  ad::Var x = tape.leaf(random_matrix(3, 8, rng, 5.0));
  ad::Var y = ad::layer_norm(x, tape.constant(Matrix(1, 8, 1.0)), tape.constant(Matrix(1, 8)));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, s = 0;
    for (double v : y.value().row(r)) m += v;
    m /= 8;
    for (double v : y.value().row(r)) s += (v - m) * (v - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(s / 8 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("parameters accumulate gradients across tapes") {
  ParamSet ps;
  ParamTensor& p = ps.add("w", Matrix(1, 2, 1.0));
  for (int i = 0; i < 2; ++i) {
    ad::Tape tape;
    ad::Var y = ad::sum(ad::scale(tape.param(p), 3.0));
    tape.backward(y);
    tape.accumulate_param_grads();
  }
  CHECK(p.grad(0, 0) == 6.0);
  CHECK(p.grad(0, 1) == 6.0);
  ps.zero_grad();
  CHECK(p.grad(0, 0) == 0.0);
  CHECK_THROWS(ps.add("w", Matrix(1, 1)));
  CHECK(ps.scalar_count() == 2);
}

TEST_CASE("dropout is the identity at evaluation time and rescales in training") {
  Rng rng(1);
  ad::Tape tape;
  ad::Var x = tape.leaf(Matrix(10, 10, 1.0));
  CHECK(ad::dropout(x, 0.5, false, rng).value() == x.value());
  const Matrix y = ad::dropout(x, 0.5, true, rng).value();
  for (double v : y.flat()) CHECK((v == 0.0 || v == 2.0));
}

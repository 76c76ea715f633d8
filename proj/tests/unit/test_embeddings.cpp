#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "../support/op_catalog.hpp"
#include "taltpp/embeddings.hpp"

using namespace taltpp;
using taltpp::testing::random_matrix;

TEST_CASE("type names split into lowercase word tokens") {
  TokenVocab v;
  CHECK(tokenize_type("Login", v, true).size() == 1);
  CHECK(tokenize_type("question-answer", v, true).size() == 2);
  CHECK(split_type_text("Foo_Bar  baz.") == std::vector<std::string>{"foo", "bar", "baz"});
  CHECK(v.token(0) == "<pad>");
  CHECK(v.id("login") == 1);
  CHECK_THROWS_AS(tokenize_type("--", v, true), ValidationError);
}

TEST_CASE("vocabulary rebuild is deterministic and serializes") {
  auto build = [] {
    TokenVocab v;
    for (const char* s : {"page view", "Login", "view cart", "logout"}) tokenize_type(s, v, true);
    return v;
  };
  const TokenVocab a = build(), b = build();
  CHECK(a == b);
  CHECK(a.size() == 6);
  CHECK(TokenVocab::from_json(a.to_json()) == a);
  const TokenVocab& closed = a;
  CHECK_THROWS_AS(tokenize_type("checkout", closed), ValidationError);
  CHECK(tokenize_type("Cart View", closed) == std::vector<std::size_t>{a.id("cart"), a.id("view")});
}

TEST_CASE("embedding lookup") {
  ad::Tape tape;
  SUBCASE("zero table gives zero rows") {
    const std::size_t ids[] = {1, 2, 1};
    const ad::Var x = embed_tokens(ids, tape.constant(Matrix(4, 3)));
    CHECK(x.rows() == 3);
    for (double v : x.value().flat()) CHECK(v == 0.0);
  }
  SUBCASE("out of range ids throw") {
    const std::size_t ids[] = {4};
    CHECK_THROWS_AS(embed_tokens(ids, tape.constant(Matrix(4, 3))), std::out_of_range);
  }
  SUBCASE("gradient lands only on looked-up rows") {
    Rng rng(3);
    ad::Var table = tape.leaf(random_matrix(5, 3, rng));
    const std::size_t ids[] = {1, 3, 3};
    tape.backward(ad::sum(embed_tokens(ids, table)));
    const Matrix& g = table.grad();
    for (std::size_t r = 0; r < 5; ++r) {
      const double expect = r == 1 ? 1.0 : r == 3 ? 2.0 : 0.0;
      for (std::size_t c = 0; c < 3; ++c) CHECK(g(r, c) == expect);
    }
  }
}

TEST_CASE("sinusoidal time embedding") {
  ParamSet ps;
  Rng rng(1);
  TemporalEmbedder e(ps, "time", TimeEmbedMode::sinusoidal, 8, rng);
  CHECK(ps.all().empty());
  ad::Tape tape;
  const Matrix z = e.embed_one(tape, 0.0, 0.0).value();
  for (std::size_t j = 0; j < 8; ++j) CHECK(z(0, j) == (j % 2 == 0 ? 0.0 : 1.0));
  const double ts[] = {0.3, 7.0, 1234.5, 1e6};
  const Matrix m = e.embed(tape, ts, ts).value();
  for (double v : m.flat()) CHECK(std::abs(v) <= 1.0);
  // second frequency pair for D = 8 is 10000^(-1/4) = 0.1
  CHECK(m(1, 2) == doctest::Approx(std::sin(0.7)).epsilon(1e-14));
  CHECK(m(1, 3) == doctest::Approx(std::cos(0.7)).epsilon(1e-14));
  CHECK_THROWS_AS(TemporalEmbedder(ps, "odd", TimeEmbedMode::sinusoidal, 7, rng), ConfigError);
}

TEST_CASE("linear time embedding with zero weight returns the bias") {
  ParamSet ps;
  Rng rng(2);
  TemporalEmbedder e(ps, "time", TimeEmbedMode::linear, 4, rng);
  ps.at("time.w").value.fill(0.0);
  Matrix& b = ps.at("time.b").value;
  for (std::size_t j = 0; j < 4; ++j) b[j] = 0.25 * static_cast<double>(j);
  ad::Tape tape;
  const Matrix out = e.embed_one(tape, 17.0, 3.0).value();
  for (std::size_t j = 0; j < 4; ++j) CHECK(out(0, j) == b[j]);

  ps.at("time.w").value.fill(2.0);
  ad::Tape fresh;
  CHECK(e.embed_one(fresh, 1.5, 0.0).value()(0, 1) == 3.25);
}

TEST_CASE("interval time embedding") {
  ParamSet ps;
  Rng rng(3);
  TemporalEmbedder e(ps, "time", TimeEmbedMode::interval_mlp, 6, rng);
  CHECK(ps.at("time.w1").value.rows() == 2);
  ps.at("time.w2").value.fill(0.0);
  Matrix& b2 = ps.at("time.b2").value;
  for (std::size_t j = 0; j < 6; ++j) b2[j] = -1.0 + static_cast<double>(j);
  ad::Tape tape;
  const Matrix out = e.embed_one(tape, 4.0, 1.0).value();
  for (std::size_t j = 0; j < 6; ++j) CHECK(out(0, j) == b2[j]);
  CHECK_THROWS_AS(e.embed_one(tape, 1.0, 2.0), std::invalid_argument);

  // the gap column matters once the weights are live
  Rng r2(4);
  ps.at("time.w2").value = random_matrix(6, 6, r2);
  ad::Tape fresh;
  const Matrix a = e.embed_one(fresh, 4.0, 1.0).value(), c = e.embed_one(fresh, 4.0, 3.0).value();
  CHECK(max_abs_diff(a, c) > 1e-6);
}

TEST_CASE("time embedding modes parse") {
  CHECK(time_embed_mode_from_string("sin") == TimeEmbedMode::sinusoidal);
  CHECK(std::string(to_string(TimeEmbedMode::interval_mlp)) == "interval");
  CHECK_THROWS_AS(time_embed_mode_from_string("fourier"), ConfigError);
}

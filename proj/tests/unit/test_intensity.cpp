#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "../support/op_catalog.hpp"
#include "taltpp/intensity.hpp"
#include "taltpp/synth.hpp"

using namespace taltpp;
using taltpp::testing::random_matrix;

namespace {

struct Head {
  ParamSet ps;
  Rng init{1};
  IntensityHead head;
  Head(std::size_t dim, std::size_t k, double sharp = 1.0) : head(ps, "hd", dim, k, sharp, init) {}
  Matrix& w() { return ps.at("hd.w").value; }
  Matrix& b() { return ps.at("hd.b").value; }
  Matrix& alpha() { return ps.at("hd.alpha").value; }
  void zero() {
    w().fill(0.0);
    b().fill(0.0);
    alpha().fill(0.0);
  }
};

EventSequence seq_of(std::vector<double> t, double t_end, std::vector<std::size_t> types = {}) {
  EventSequence s;
  s.seq_id = "s";
  for (std::size_t i = 0; i < t.size(); ++i) s.events.push_back({t[i], types.empty() ? 0 : types[i], "x"});
  s.t_end = t_end;
  s.explicit_end = true;
  return s;
}

// b such that softplus(b) = lambda
double inverse_softplus(double lambda) { return std::log(std::expm1(lambda)); }

}  // namespace

TEST_CASE("intensity closed forms") {
  Head h(4, 2);
  h.zero();
  const std::vector<double> ctx(4, 0.3);
  for (double t : {0.0, 0.5, 10.0}) CHECK(h.head.intensity(ctx, t, 0.0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  h.b()[1] = 20.0;
  CHECK(std::abs(h.head.intensity(ctx, 1.0, 0.0, 1) - 20.0) < 1e-8);
  CHECK(h.head.total_intensity(ctx, 1.0, 0.0) == doctest::Approx(std::log(2.0) + 20.0));

  h.alpha()[0] = 0.7;
  double prev = 0.0;
  for (int g = 0; g <= 200; ++g) {
    const double lam = h.head.intensity(ctx, 3.0 + 0.05 * g, 3.0, 0);
    if (g) CHECK(lam > prev);
    CHECK(lam > 0.0);
    prev = lam;
  }
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(std::isfinite(std::log(softplus(-30.0))));
  CHECK(softplus(0.0, 4.0) == doctest::Approx(std::log(2.0) / 4.0));
}

TEST_CASE("unit-rate Poisson log-likelihood is minus the horizon") {
  Head h(3, 1);
  h.zero();
  h.b()[0] = inverse_softplus(1.0);
  const EventSequence s = seq_of({0.4, 1.1, 2.0, 3.7}, 6.0);
  Rng rng(3);
  ad::Tape tape;
  const CompensatorPlan plan = plan_compensator(s, 20, rng);
  CHECK(plan.intervals.size() == 5);
  const LikelihoodTerms lt = sequence_log_likelihood(tape, h.head, tape.constant(Matrix(5, 3)), s, plan);
  CHECK(lt.log_likelihood.value()[0] == doctest::Approx(-6.0).epsilon(1e-12));
}

TEST_CASE("constant intensity makes the Monte Carlo compensator exact") {
  Head h(3, 2);
  h.zero();
  h.b()[0] = 0.3;
  h.b()[1] = -1.0;
  const double lam = softplus(0.3) + softplus(-1.0);
  const EventSequence s = seq_of({0.5, 0.9, 4.0}, 4.0, {0, 1, 1});
  for (std::size_t m : {1u, 3u, 20u}) {
    Rng rng(m);
    ad::Tape tape;
    const ad::Var ll = nll_sequence(tape, h.head, tape.constant(Matrix(4, 3)), s, McConfig{m}, rng);
    const double expect = -(std::log(softplus(0.3)) + 2 * std::log(softplus(-1.0)) - lam * 4.0);
    CHECK(ll.value()[0] == doctest::Approx(expect).epsilon(1e-12));
  }
  Rng rng(1);
  CHECK_THROWS_AS(plan_compensator(s, 0, rng), ConfigError);
  ad::Tape tape;
  CHECK_THROWS_AS(nll_sequence(tape, h.head, tape.constant(Matrix(4, 3)), s, McConfig{0}, rng), ConfigError);
}

TEST_CASE("likelihood intervals") {
  const auto iv = likelihood_intervals(seq_of({1.0, 2.5}, 2.5));
  REQUIRE(iv.size() == 2);
  CHECK(iv[0].start == 0.0);
  CHECK(iv[0].end == 1.0);
  CHECK(iv[1].context == 1);
  const auto tail = likelihood_intervals(seq_of({1.0, 2.5}, 4.0));
  REQUIRE(tail.size() == 3);
  CHECK(tail[2].context == 2);
  CHECK(tail[2].start == 2.5);
  CHECK(tail[2].end == 4.0);
}

TEST_CASE("Monte Carlo Hawkes likelihood agrees with the closed form") {
  const HawkesParams p{0.5, 0.8, 1.2};
  Rng gen(77);
  const EventSequence s = gen_hawkes_exp(p, 40.0, 1, gen);
  REQUIRE(s.size() > 5);
  double event_part = 0.0;
  for (const auto& e : s.events) event_part += std::log(hawkes_exp_intensity(p, s, e.t));
  const double exact = hawkes_exp_loglik(p, s);
  double prev_err = 0.0;
  for (std::size_t m : {20u, 200u, 2000u}) {
    Rng rng(m, 3);
    const CompensatorPlan plan = plan_compensator(s, m, rng);
    const McEstimate est = mc_integral(plan, [&](std::size_t, double t) { return hawkes_exp_intensity(p, s, t); });
    const double gap = std::abs(event_part - est.value - exact);
    CAPTURE(m);
    CAPTURE(gap);
    CAPTURE(est.std_error);
    CHECK(gap <= 3.0 * est.std_error);
    if (prev_err > 0.0) CHECK(est.std_error < prev_err);
    prev_err = est.std_error;
  }
}

TEST_CASE("standard error shrinks like one over root M") {
  const EventSequence s = seq_of({1.0, 3.0}, 3.0);
  auto f = [](std::size_t, double t) { return 1.0 + std::sin(t); };
  Rng r1(5), r2(6);
  const double se1 = mc_integral(plan_compensator(s, 100, r1), f).std_error;
  const double se2 = mc_integral(plan_compensator(s, 10000, r2), f).std_error;
  CHECK(se1 / se2 == doctest::Approx(10.0).epsilon(0.15));
}

TEST_CASE("taped compensator equals direct evaluation on the same samples") {
  Head h(4, 3);
  Rng rng(8);
  h.b() = random_matrix(1, 3, rng);
  h.alpha() = random_matrix(1, 3, rng, 0.3);
  const Matrix ctx = random_matrix(4, 4, rng);
  const EventSequence s = seq_of({0.3, 1.0, 1.8}, 2.6, {2, 0, 1});
  const CompensatorPlan plan = plan_compensator(s, 7, rng);
  ad::Tape tape;
  const LikelihoodTerms lt = sequence_log_likelihood(tape, h.head, tape.constant(ctx), s, plan);
  const McEstimate est = mc_integral(plan, [&](std::size_t i, double t) {
    const auto& iv = plan.intervals[i];
    return h.head.total_intensity(ctx.row(iv.context), t, iv.start);
  });
  double comp = 0.0;
  for (double v : lt.compensator.value().flat()) comp += v;
  CHECK(comp == doctest::Approx(est.value).epsilon(1e-12));
  double ev = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    ev += std::log(h.head.intensity(ctx.row(i), s.events[i].t, prev, s.events[i].type_id));
    prev = s.events[i].t;
  }
  CHECK(lt.log_likelihood.value()[0] == doctest::Approx(ev - est.value).epsilon(1e-12));
}

TEST_CASE("likelihood gradients match finite differences") {
  Head h(4, 2, 2.0);
  Rng rng(9);
  h.b() = random_matrix(1, 2, rng);
  h.alpha() = random_matrix(1, 2, rng, 0.3);
  const Matrix ctx = random_matrix(4, 4, rng);
  const EventSequence s = seq_of({0.3, 1.0, 1.8}, 2.6, {1, 0, 1});
  const CompensatorPlan plan = plan_compensator(s, 5, rng);
  ScalarFn fn = [&](ad::Tape& tape, std::span<const ad::Var> in) {
    return sequence_log_likelihood(tape, h.head, in[0], s, plan).log_likelihood;
  };
  const GradCheckResult r = grad_check(fn, {ctx});
  CHECK(r.max_rel_error <= 1e-4);
  const GradCheckResult rp = grad_check_params(
      [&](ad::Tape& tape) {
        const ad::Var in[] = {tape.constant(ctx)};
        return fn(tape, in);
      },
      h.ps);
  CAPTURE(rp.worst);
  CHECK(rp.max_rel_error <= 1e-4);
}

TEST_CASE("expected next time") {
  const McConfig mc;
  SUBCASE("constant rate two") {
    const NextTime n = expected_next_time([](double) { return 2.0; }, 3.0, mc);
    CHECK(std::abs(n.time - 3.5) <= 1e-3);
    CHECK_FALSE(n.truncated);
  }
  SUBCASE("all-zero head") {
    Head h(4, 1);
    h.zero();
    const std::vector<double> ctx(4, 1.0);
    const NextTime n = predict_next_time(h.head, ctx, 1.0, mc);
    CHECK(std::abs(n.time - 1.0 - 1.0 / std::log(2.0)) <= 1e-3);
  }
  SUBCASE("doubling the rate halves the wait") {
    const double a = expected_next_time([](double) { return 0.8; }, 0.0, mc).time;
    const double b = expected_next_time([](double) { return 1.6; }, 0.0, mc).time;
    CHECK(b == doctest::Approx(a / 2.0).epsilon(1e-3));
  }
  SUBCASE("linearly increasing rate against a dense reference") {
    auto lam = [](double u) { return 0.3 + 0.9 * u; };
    const double got = expected_next_time(lam, 0.0, mc).time;
    // survival integral on a grid 100 times finer, over a range where survival is negligible
    const std::size_t g = 256 * 100;
    const double upper = 12.0, h = upper / static_cast<double>(g - 1);
    double mean = 0.0;
    for (std::size_t j = 0; j < g; ++j) {
      const double u = h * static_cast<double>(j);
      const double surv = std::exp(-(0.3 * u + 0.45 * u * u));
      mean += (j == 0 || j + 1 == g ? 0.5 : 1.0) * h * surv;
    }
    CHECK(std::abs(got - mean) <= 1e-3 * mean);
  }
  SUBCASE("a vanishing rate is truncated at the cap") {
    const NextTime n = expected_next_time([](double) { return 1e-7; }, 0.0, mc);
    CHECK(n.truncated);
    CHECK(std::isfinite(n.time));
    CHECK(n.time > 0.0);
  }
  SUBCASE("invalid settings") {
    McConfig bad;
    bad.cutoff = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("next type is the argmax intensity") {
  const std::vector<double> ctx{0.2, -0.4, 1.0};
  {
    Head h(3, 1);
    CHECK(predict_next_type(h.head, ctx, 2.0, 1.0) == 0);
  }
  {
    Head h(3, 3);
    h.zero();
    h.b()[0] = 5.0;
    h.b()[1] = -2.0;
    CHECK(predict_next_type(h.head, ctx, 2.0, 1.0) == 0);
    h.b()[0] = 0.0;
    h.b()[1] = 0.0;
    h.b()[2] = 0.0;
    CHECK(predict_next_type(h.head, ctx, 2.0, 1.0) == 0);  // all tied
    CHECK_THROWS_AS(predict_next_type(h.head, ctx, 0.5, 1.0), std::invalid_argument);
  }
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    Head h(3, 5);
    h.w() = random_matrix(3, 5, rng);
    h.b() = random_matrix(1, 5, rng);
    h.alpha() = random_matrix(1, 5, rng);
    const double t = 1.0 + rng.uniform(0.0, 2.0);
    const auto lam = h.head.intensities(ctx, t, 1.0);
    std::size_t best = 0;
    for (std::size_t k = 0; k < 5; ++k)
      if (lam[k] > lam[best]) best = k;
    CHECK(predict_next_type(h.head, ctx, t, 1.0) == best);
    // scaling every intensity by one positive factor cannot change the winner
    std::size_t scaled = 0;
    for (std::size_t k = 0; k < 5; ++k)
      if (3.7 * lam[k] > 3.7 * lam[scaled]) scaled = k;
    CHECK(scaled == best);
  }
}

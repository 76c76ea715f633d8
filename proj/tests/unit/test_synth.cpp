#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "taltpp/embeddings.hpp"
#include "taltpp/synth.hpp"

using namespace taltpp;

namespace {

bool strictly_increasing(const EventSequence& s) {
  for (std::size_t i = 1; i < s.size(); ++i)
    if (!(s.events[i].t > s.events[i - 1].t)) return false;
  return s.events.empty() || (s.events.front().t >= 0.0 && s.events.back().t <= s.t_end);
}

double direct_loglik(const HawkesParams& p, const EventSequence& s) {
  double ll = -p.mu * s.t_end;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double excite = 0.0;
    for (std::size_t j = 0; j < i; ++j) excite += std::exp(-p.beta * (s.events[i].t - s.events[j].t));
    ll += std::log(p.mu + p.alpha * excite);
    ll -= p.alpha / p.beta * (1.0 - std::exp(-p.beta * (s.t_end - s.events[i].t)));
  }
  return ll;
}

}  // namespace

TEST_CASE("Poisson counts match the mean") {
  double total = 0.0;
  for (int r = 0; r < 200; ++r) {
    Rng rng(static_cast<std::uint64_t>(r), 1);
    const EventSequence s = gen_poisson(1.0, 1000.0, 1, rng);
    CHECK(strictly_increasing(s));
    CHECK(s.t_end == 1000.0);
    total += static_cast<double>(s.size());
  }
  // 200 replications: the mean count has sd sqrt(1000 / 200)
  CHECK(std::abs(total / 200.0 - 1000.0) <= 3.0 * std::sqrt(1000.0 / 200.0));
}

TEST_CASE("Poisson gaps pass a Kolmogorov-Smirnov check") {
  const double rate = 1.7;
  Rng rng(2);
  std::vector<double> gaps;
  while (gaps.size() < 10000) {
    const EventSequence s = gen_poisson(rate, 500.0, 1, rng);
    double prev = 0.0;
    for (const auto& e : s.events) {
      gaps.push_back(e.t - prev);
      prev = e.t;
    }
  }
  gaps.resize(10000);
  std::sort(gaps.begin(), gaps.end());
  double d = 0.0;
  const double n = static_cast<double>(gaps.size());
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double cdf = 1.0 - std::exp(-rate * gaps[i]);
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - cdf), std::abs(cdf - static_cast<double>(i) / n)});
  }
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("empty Poisson draws are redrawn and counted") {
  Rng rng(3);
  std::size_t redraws = 0;
  for (int i = 0; i < 50; ++i) {
    const EventSequence s = gen_poisson(0.01, 1.0, 1, rng, &redraws);
    CHECK(s.size() >= 1);
  }
  CHECK(redraws > 0);
}

TEST_CASE("types are uniform and tokenize into two words") {
  Rng rng(4);
  const EventSequence s = gen_poisson(1.0, 3000.0, 3, rng);
  std::vector<double> counts(3, 0.0);
  for (const auto& e : s.events) {
    REQUIRE(e.type_id < 3);
    CHECK(e.type_text == synth_type_name(e.type_id));
    counts[e.type_id] += 1.0;
  }
  const double n = static_cast<double>(s.size());
  for (double c : counts) CHECK(std::abs(c / n - 1.0 / 3.0) < 0.03);
  CHECK(synth_type_name(2) == "type_2");
  CHECK(split_type_text(synth_type_name(2)).size() == 2);
}

TEST_CASE("Hawkes without excitation is Poisson") {
  const HawkesParams p{0.8, 0.0, 1.0};
  double total = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    Rng rng(static_cast<std::uint64_t>(r), 5);
    const EventSequence s = gen_hawkes_exp(p, 500.0, 1, rng);
    CHECK(strictly_increasing(s));
    total += static_cast<double>(s.size());
  }
  const double expect = 0.8 * 500.0 * reps;
  CHECK(std::abs(total - expect) <= 3.0 * std::sqrt(expect));

  Rng rng(6);
  const EventSequence s = gen_poisson(0.8, 100.0, 1, rng);
  CHECK(hawkes_exp_loglik(p, s) == static_cast<double>(s.size()) * std::log(0.8) - 0.8 * 100.0);
  CHECK(hawkes_exp_loglik(p, s) == poisson_loglik(0.8, s));
}

TEST_CASE("Hawkes long-run rate matches the branching formula") {
  const HawkesParams p{0.5, 0.8, 1.0};
  CHECK(p.stationary_rate() == doctest::Approx(2.5));
  double rate = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed), 7);
    const EventSequence s = gen_hawkes_exp(p, 1e4, 1, rng);
    CHECK(strictly_increasing(s));
    rate += static_cast<double>(s.size()) / 1e4;
  }
  rate /= 10.0;
  CAPTURE(rate);
  CHECK(std::abs(rate - 2.5) <= 0.05 * 2.5);
}

TEST_CASE("recursive Hawkes likelihood equals the double sum") {
  const HawkesParams p{0.4, 0.6, 1.5};
  Rng rng(8);
  EventSequence s = gen_hawkes_exp(p, 200.0, 1, rng);
  REQUIRE(s.size() >= 50);
  s.events.resize(50);
  s.t_end = s.events.back().t + 0.5;
  CHECK(std::abs(hawkes_exp_loglik(p, s) - direct_loglik(p, s)) <= 1e-10);
  for (const auto& e : s.events) CHECK(hawkes_exp_intensity(p, s, e.t) >= p.mu);
}

TEST_CASE("likelihood peaks near the generating parameters") {
  const HawkesParams truth{0.5, 0.8, 1.0};
  Rng rng(9);
  const EventSequence s = gen_hawkes_exp(truth, 1e4, 1, rng);
  std::vector<std::pair<double, bool>> cells;
  for (double fm : {0.8, 1.0, 1.2})
    for (double fa : {0.8, 1.0, 1.2})
      for (double fb : {0.8, 1.0, 1.2}) {
        const HawkesParams q{truth.mu * fm, truth.alpha * fa, truth.beta * fb};
        cells.emplace_back(hawkes_exp_loglik(q, s), fm == 1.0 && fa == 1.0 && fb == 1.0);
      }
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const auto it = std::find_if(cells.begin(), cells.end(), [](const auto& c) { return c.second; });
  CHECK(it - cells.begin() < 3);
}

TEST_CASE("generators are deterministic under a seed") {
  const HawkesParams p;
  Rng a(10, 3), b(10, 3), c(11, 3);
  const EventSequence x = gen_hawkes_exp(p, 100.0, 2, a), y = gen_hawkes_exp(p, 100.0, 2, b);
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x.events[i].t == y.events[i].t);
    CHECK(x.events[i].type_id == y.events[i].type_id);
  }
  const EventSequence z = gen_hawkes_exp(p, 100.0, 2, c);
  CHECK((z.size() != x.size() || z.events[0].t != x.events[0].t));
}

TEST_CASE("non-stationary parameters are rejected") {
  HawkesParams p{0.5, 1.2, 1.0};
  try {
    p.validate();
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("not stationary") != std::string::npos);
  }
  p = {-1.0, 0.1, 1.0};
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

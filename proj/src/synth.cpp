#include "taltpp/synth.hpp"

#include <cmath>

namespace taltpp {

void HawkesParams::validate() const {
  if (!(mu > 0.0)) throw ConfigError("hawkes: baseline mu must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("hawkes: excitation alpha must be non-negative");
  if (!(beta > 0.0)) throw ConfigError("hawkes: decay beta must be positive");
  if (!(alpha / beta < 1.0))
    throw ConfigError("hawkes: not stationary, alpha/beta = " + std::to_string(alpha / beta) + " must be < 1");
}

std::string synth_type_name(std::size_t k) { return "type_" + std::to_string(k); }

namespace {

Event make_event(double t, std::size_t num_types, Rng& rng) {
  const std::size_t k = num_types > 1 ? rng.index(num_types) : 0;
  return {t, k, synth_type_name(k)};
}

}  // namespace

EventSequence gen_poisson(double rate, double horizon, std::size_t num_types, Rng& rng, std::size_t* resamples) {
  if (!(rate > 0.0) || !(horizon > 0.0)) throw ConfigError("poisson: rate and horizon must be positive");
  if (num_types == 0) throw ConfigError("poisson: need at least one type");
  EventSequence seq;
  seq.t_end = horizon;
  seq.explicit_end = true;
  std::size_t redraws = 0;
  for (;;) {
    double t = rng.exponential(rate);
    while (t <= horizon) {
      seq.events.push_back(make_event(t, num_types, rng));
      t += rng.exponential(rate);
    }
    if (!seq.events.empty()) break;
    ++redraws;
  }
  if (resamples) *resamples = redraws;
  return seq;
}

EventSequence gen_hawkes_exp(const HawkesParams& p, double horizon, std::size_t num_types, Rng& rng) {
  p.validate();
  if (!(horizon > 0.0)) throw ConfigError("hawkes: horizon must be positive");
  if (num_types == 0) throw ConfigError("hawkes: need at least one type");
  EventSequence seq;
  seq.t_end = horizon;
  seq.explicit_end = true;

  // excite = sum_j exp(-beta (t - t_j)) at the current time t; between events
  // the intensity only decays, so its value at t bounds the next candidate.
  double t = 0.0, excite = 0.0;
  for (;;) {
    const double bound = p.mu + p.alpha * excite;
    const double w = rng.exponential(bound);
    const double cand = t + w;
    if (cand > horizon) break;
    excite *= std::exp(-p.beta * w);
    t = cand;
    const double lam = p.mu + p.alpha * excite;
    if (rng.uniform() * bound <= lam) {
      seq.events.push_back(make_event(t, num_types, rng));
      excite += 1.0;
    }
  }
  return seq;
}

double hawkes_exp_intensity(const HawkesParams& p, const EventSequence& seq, double t) {
  double excite = 0.0;
  for (const auto& e : seq.events) {
    if (e.t >= t) break;
    excite += std::exp(-p.beta * (t - e.t));
  }
  return p.mu + p.alpha * excite;
}

double hawkes_exp_loglik(const HawkesParams& p, const EventSequence& seq) {
  if (p.alpha == 0.0) return poisson_loglik(p.mu, seq);
  const double horizon = seq.t_end;
  double ll = -p.mu * horizon;
  double a = 0.0;
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const double ti = seq.events[i].t;
    if (i > 0) a = std::exp(-p.beta * (ti - seq.events[i - 1].t)) * (1.0 + a);
    ll += std::log(p.mu + p.alpha * a);
    ll -= (p.alpha / p.beta) * (1.0 - std::exp(-p.beta * (horizon - ti)));
  }
  return ll;
}

double poisson_loglik(double rate, const EventSequence& seq) {
  return static_cast<double>(seq.events.size()) * std::log(rate) - rate * seq.t_end;
}

}  // namespace taltpp

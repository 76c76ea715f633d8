#pragma once

// Ground-truth generators and closed-form likelihoods used as oracles.
// Multitype output shares one temporal process; types are drawn uniformly and
// named "type_0" .. "type_{K-1}".

#include <cstddef>
#include <string>
#include <vector>

#include "taltpp/errors.hpp"
#include "taltpp/event_data.hpp"
#include "taltpp/rng.hpp"

namespace taltpp {

struct HawkesParams {
  double mu = 0.5;
  double alpha = 0.8;
  double beta = 1.0;

  // Throws ConfigError unless mu > 0, alpha >= 0, beta > 0 and alpha/beta < 1.
  void validate() const;
  double stationary_rate() const { return mu / (1.0 - alpha / beta); }
};

std::string synth_type_name(std::size_t k);

// Exponential(rate) gaps on [0, T]; t_end = T. Empty draws are redrawn and
// counted in `resamples`.
EventSequence gen_poisson(double rate, double horizon, std::size_t num_types, Rng& rng, std::size_t* resamples = nullptr);

// Ogata thinning for lambda(t) = mu + alpha * sum_{t_j < t} exp(-beta (t - t_j)).
// May return an empty sequence when the horizon is short.
EventSequence gen_hawkes_exp(const HawkesParams& p, double horizon, std::size_t num_types, Rng& rng);

// Ground-process intensity at t given the events strictly before t.
double hawkes_exp_intensity(const HawkesParams& p, const EventSequence& seq, double t);

// Closed-form log-likelihood of the ground process on [0, t_end].
double hawkes_exp_loglik(const HawkesParams& p, const EventSequence& seq);

double poisson_loglik(double rate, const EventSequence& seq);

}  // namespace taltpp

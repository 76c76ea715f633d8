#pragma once

// Conditional intensity, Monte Carlo sequence log-likelihood, and
// minimum-Bayes-risk next-event prediction.
//
// For the interval following event i (context h_i):
//   lambda_k(t) = softplus_s(alpha_k * (t - t_i) + w_k . h_i + b_k)
// The sequence log-likelihood is
//   sum_i log lambda_{k_i}(t_i | h_{i-1}) - sum_i Lambda_i
// where Lambda_i integrates the total intensity over (t_{i-1}, t_i] with
// t_0 = 0, plus the tail (t_N, t_end] when the horizon lies beyond t_N.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "taltpp/autodiff.hpp"
#include "taltpp/errors.hpp"
#include "taltpp/event_data.hpp"

namespace taltpp {

struct McConfig {
  std::size_t samples = 20;  // M, integral samples per interval
  std::size_t grid = 256;    // G, quadrature points for the expected next time
  double cutoff = 1e-4;      // q, survival level that ends the quadrature range
  double mean_gap = 1.0;     // typical gap in model time units; sets the search scale
  double cap_factor = 1000.0;

  void validate() const;
};

class IntensityHead {
 public:
  IntensityHead(ParamSet& params, const std::string& prefix, std::size_t dim, std::size_t num_types, double sharpness,
                Rng& init);

  std::size_t num_types() const { return k_; }
  std::size_t dim() const { return d_; }
  double sharpness() const { return sharpness_; }

  // w_k . h + b_k for every context row: R x K.
  ad::Var base(ad::Tape& tape, ad::Var contexts) const;
  ad::Var slope(ad::Tape& tape) const;

  // Direct (non-differentiable) evaluation from the current parameter values.
  std::vector<double> intensities(std::span<const double> h, double t, double t_prev) const;
  double intensity(std::span<const double> h, double t, double t_prev, std::size_t k) const;
  double total_intensity(std::span<const double> h, double t, double t_prev) const;

 private:
  ParamSet* params_;
  std::string prefix_;
  std::size_t d_;
  std::size_t k_;
  double sharpness_;
};

double softplus(double x, double sharpness = 1.0);

// One integration interval of the compensator.
struct Interval {
  std::size_t context = 0;  // row of the context matrix conditioning this interval
  double start = 0.0;
  double end = 0.0;
};

// The N event intervals (t_{i-1}, t_i] plus the censored tail when present.
std::vector<Interval> likelihood_intervals(const EventSequence& seq);

// Uniform sample points for the Monte Carlo compensator.
struct CompensatorPlan {
  std::vector<Interval> intervals;
  std::size_t samples = 0;
  std::vector<double> points;  // intervals.size() * samples absolute times
};

CompensatorPlan plan_compensator(const EventSequence& seq, std::size_t samples, Rng& rng);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// sum_i (end_i - start_i) * mean_m f(i, u_im) and its standard error, for any
// total-intensity function. Used with the learned head and with closed-form
// reference processes alike.
McEstimate mc_integral(const CompensatorPlan& plan, const std::function<double(std::size_t, double)>& total_intensity);

// Differentiable likelihood pieces for one sequence.
struct LikelihoodTerms {
  ad::Var log_likelihood;  // 1 x 1
  ad::Var event_terms;     // N x 1, log lambda_{k_i}(t_i)
  ad::Var compensator;     // intervals x 1, Lambda_i estimates
};

// contexts: (N+1) x D, row 0 = h_0.
LikelihoodTerms sequence_log_likelihood(ad::Tape& tape, const IntensityHead& head, ad::Var contexts, const EventSequence& seq,
                                        const CompensatorPlan& plan);

ad::Var nll_sequence(ad::Tape& tape, const IntensityHead& head, ad::Var contexts, const EventSequence& seq, const McConfig& mc,
                     Rng& rng);

struct NextTime {
  double time = 0.0;
  bool truncated = false;  // survival never fell below the cutoff before the cap
};

// E[next time] = integral of u * lambda(u) exp(-Lambda(u)), evaluated by
// trapezoidal quadrature in its integrated-by-parts form (the survival
// integral) over [0, t_up]. The total intensity is given as a function of the
// offset u from the previous event. When the cap is hit, the first moment of
// the captured density is renormalized instead.
NextTime expected_next_time(const std::function<double(double)>& total_by_offset, double t_prev, const McConfig& mc);

NextTime predict_next_time(const IntensityHead& head, std::span<const double> h, double t_prev, const McConfig& mc);

// argmax_k lambda_k(t_hat); ties go to the lowest type id.
std::size_t predict_next_type(const IntensityHead& head, std::span<const double> h, double t_hat, double t_prev);

}  // namespace taltpp

#include "taltpp/intensity.hpp"

#include <algorithm>
#include <cmath>

#include "taltpp/kernels.hpp"

namespace taltpp {

void McConfig::validate() const {
  if (samples < 1) throw ConfigError("integral samples M must be at least 1");
  if (grid < 2) throw ConfigError("prediction grid needs at least 2 points");
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw ConfigError("survival cutoff must lie in (0, 1)");
  if (!(mean_gap > 0.0) || !(cap_factor > 1.0)) throw ConfigError("prediction search scale must be positive");
}

double softplus(double x, double s) {
  const double z = s * x;
  return (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)))) / s;
}

IntensityHead::IntensityHead(ParamSet& params, const std::string& prefix, std::size_t dim, std::size_t num_types,
                             double sharpness, Rng& init)
    : params_(&params), prefix_(prefix), d_(dim), k_(num_types), sharpness_(sharpness) {
  if (num_types == 0) throw ConfigError("intensity head needs at least one event type");
  if (!(sharpness > 0.0)) throw ConfigError("softplus sharpness must be positive");
  params.add(prefix + ".w", init_projection(dim, num_types, init));
  params.add(prefix + ".b", Matrix(1, num_types));
  params.add(prefix + ".alpha", Matrix(1, num_types));
}

ad::Var IntensityHead::base(ad::Tape& tape, ad::Var contexts) const {
  return ad::linear(contexts, tape.param(params_->at(prefix_ + ".w")), tape.param(params_->at(prefix_ + ".b")));
}

ad::Var IntensityHead::slope(ad::Tape& tape) const { return tape.param(params_->at(prefix_ + ".alpha")); }

std::vector<double> IntensityHead::intensities(std::span<const double> h, double t, double t_prev) const {
  if (h.size() != d_) throw std::invalid_argument("intensity: context width mismatch");
  const Matrix& w = params_->at(prefix_ + ".w").value;
  const Matrix& b = params_->at(prefix_ + ".b").value;
  const Matrix& a = params_->at(prefix_ + ".alpha").value;
  std::vector<double> pre(k_);
  for (std::size_t k = 0; k < k_; ++k) pre[k] = b[k] + a[k] * (t - t_prev);
  // pre += h W, accumulated row by row like the taped matmul
  for (std::size_t p = 0; p < d_; ++p)
    for (std::size_t k = 0; k < k_; ++k) pre[k] += h[p] * w(p, k);
  for (auto& v : pre) v = softplus(v, sharpness_);
  return pre;
}

double IntensityHead::intensity(std::span<const double> h, double t, double t_prev, std::size_t k) const {
  return intensities(h, t, t_prev).at(k);
}

double IntensityHead::total_intensity(std::span<const double> h, double t, double t_prev) const {
  double s = 0.0;
  for (double v : intensities(h, t, t_prev)) s += v;
  return s;
}

std::vector<Interval> likelihood_intervals(const EventSequence& seq) {
  std::vector<Interval> out;
  double prev = 0.0;
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    out.push_back({i, prev, seq.events[i].t});
    prev = seq.events[i].t;
  }
  if (seq.t_end > prev) out.push_back({seq.events.size(), prev, seq.t_end});
  return out;
}

CompensatorPlan plan_compensator(const EventSequence& seq, std::size_t samples, Rng& rng) {
  if (samples < 1) throw ConfigError("integral samples M must be at least 1");
  CompensatorPlan plan;
  plan.intervals = likelihood_intervals(seq);
  plan.samples = samples;
  plan.points.reserve(plan.intervals.size() * samples);
  for (const auto& iv : plan.intervals)
    for (std::size_t m = 0; m < samples; ++m) plan.points.push_back(rng.uniform(iv.start, iv.end));
  return plan;
}

McEstimate mc_integral(const CompensatorPlan& plan, const std::function<double(std::size_t, double)>& total_intensity) {
  McEstimate est;
  double var = 0.0;
  const double m = static_cast<double>(plan.samples);
  for (std::size_t i = 0; i < plan.intervals.size(); ++i) {
    const double width = plan.intervals[i].end - plan.intervals[i].start;
    double s = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < plan.samples; ++j) {
      const double f = total_intensity(i, plan.points[i * plan.samples + j]);
      s += f;
      s2 += f * f;
    }
    const double mean = s / m;
    est.value += width * mean;
    if (plan.samples > 1) {
      const double sample_var = std::max(0.0, (s2 - m * mean * mean) / (m - 1.0));
      var += width * width * sample_var / m;
    }
  }
  est.std_error = std::sqrt(var);
  return est;
}

LikelihoodTerms sequence_log_likelihood(ad::Tape& tape, const IntensityHead& head, ad::Var contexts, const EventSequence& seq,
                                        const CompensatorPlan& plan) {
  const std::size_t n = seq.size();
  if (contexts.rows() != n + 1) throw std::invalid_argument("log-likelihood: need N+1 context rows");
  ad::Var base = head.base(tape, contexts);
  ad::Var slope = head.slope(tape);
  const double s = head.sharpness();

  // event terms: interval i-1 context evaluated at t_i
  std::vector<std::size_t> rows(n), types(n);
  std::vector<double> offsets(n);
  double prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = i;
    offsets[i] = seq.events[i].t - prev;
    types[i] = seq.events[i].type_id;
    prev = seq.events[i].t;
  }
  ad::Var at_events = ad::softplus(ad::affine_time_expand(base, slope, rows, offsets), s);
  ad::Var event_terms = ad::log(ad::pick(at_events, types));

  // compensator: Lambda_i = (width_i / M) * sum_m sum_k lambda_k(u_im)
  const std::size_t ni = plan.intervals.size(), m = plan.samples;
  std::vector<std::size_t> srows(ni * m);
  std::vector<double> soffsets(ni * m);
  Matrix agg(ni, ni * m);
  for (std::size_t i = 0; i < ni; ++i) {
    const Interval& iv = plan.intervals[i];
    const double w = (iv.end - iv.start) / static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      srows[i * m + j] = iv.context;
      soffsets[i * m + j] = plan.points[i * m + j] - iv.start;
      agg(i, i * m + j) = w;
    }
  }
  ad::Var at_samples = ad::softplus(ad::affine_time_expand(base, slope, srows, soffsets), s);
  ad::Var per_type = ad::matmul(tape.constant(std::move(agg)), at_samples);
  ad::Var compensator = ad::matmul(per_type, tape.constant(Matrix(head.num_types(), 1, 1.0)));

  ad::Var ll = ad::sub(ad::sum(event_terms), ad::sum(compensator));
  return {ll, event_terms, compensator};
}

ad::Var nll_sequence(ad::Tape& tape, const IntensityHead& head, ad::Var contexts, const EventSequence& seq, const McConfig& mc,
                     Rng& rng) {
  mc.validate();
  const CompensatorPlan plan = plan_compensator(seq, mc.samples, rng);
  return ad::scale(sequence_log_likelihood(tape, head, contexts, seq, plan).log_likelihood, -1.0);
}

namespace {

struct Quadrature {
  std::vector<double> u, lambda, cum;  // grid offsets, intensity, cumulative integral
};

Quadrature integrate(const std::function<double(double)>& f, double upper, std::size_t g) {
  Quadrature q;
  q.u.resize(g);
  q.lambda.resize(g);
  q.cum.resize(g);
  const double h = upper / static_cast<double>(g - 1);
  for (std::size_t j = 0; j < g; ++j) {
    q.u[j] = h * static_cast<double>(j);
    q.lambda[j] = f(q.u[j]);
    q.cum[j] = j == 0 ? 0.0 : q.cum[j - 1] + 0.5 * h * (q.lambda[j] + q.lambda[j - 1]);
  }
  return q;
}

}  // namespace

NextTime expected_next_time(const std::function<double(double)>& total_by_offset, double t_prev, const McConfig& mc) {
  mc.validate();
  const double cap = mc.cap_factor * mc.mean_gap;
  const double log_q = std::log(mc.cutoff);
  NextTime out;

  // widen the window until the survival drops below the cutoff
  double upper = mc.mean_gap;
  Quadrature q = integrate(total_by_offset, upper, mc.grid);
  while (-q.cum.back() >= log_q) {
    if (upper >= cap) {
      out.truncated = true;
      break;
    }
    upper = std::min(2.0 * upper, cap);
    q = integrate(total_by_offset, upper, mc.grid);
  }
  if (!out.truncated) {
    // first grid point where the survival is below q, then a fresh grid on [0, t_up]
    std::size_t j = 1;
    while (j + 1 < mc.grid && -q.cum[j] >= log_q) ++j;
    q = integrate(total_by_offset, q.u[j], mc.grid);
  }

  const double h = q.u[1] - q.u[0];
  if (!out.truncated) {
    // E[T] = integral of the survival; the tail beyond t_up holds under q of the mass
    double mean = 0.0;
    for (std::size_t j = 0; j < mc.grid; ++j) mean += ((j == 0 || j + 1 == mc.grid) ? 0.5 * h : h) * std::exp(-q.cum[j]);
    out.time = t_prev + mean;
    return out;
  }
  // truncated: first moment of the captured density, renormalized
  double mass = 0.0, first = 0.0;
  for (std::size_t j = 0; j < mc.grid; ++j) {
    const double dens = q.lambda[j] * std::exp(-q.cum[j]);
    const double wgt = (j == 0 || j + 1 == mc.grid) ? 0.5 * h : h;
    mass += wgt * dens;
    first += wgt * dens * q.u[j];
  }
  out.time = t_prev + (mass > 0.0 ? first / mass : 0.0);
  return out;
}

NextTime predict_next_time(const IntensityHead& head, std::span<const double> h, double t_prev, const McConfig& mc) {
  return expected_next_time([&](double u) { return head.total_intensity(h, t_prev + u, t_prev); }, t_prev, mc);
}

std::size_t predict_next_type(const IntensityHead& head, std::span<const double> h, double t_hat, double t_prev) {
  if (t_hat < t_prev) throw std::invalid_argument("predict_next_type: predicted time precedes the previous event");
  const std::vector<double> lam = head.intensities(h, t_hat, t_prev);
  std::size_t best = 0;
  for (std::size_t k = 1; k < lam.size(); ++k)
    if (lam[k] > lam[best]) best = k;
  return best;
}

}  // namespace taltpp

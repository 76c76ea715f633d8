#include "taltpp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

namespace taltpp {

const char* to_string(Route r) { return r == Route::heads ? "heads" : "mbr"; }

Route route_from_string(const std::string& s) {
  if (s == "heads") return Route::heads;
  if (s == "mbr") return Route::mbr;
  throw ConfigError("unknown route '" + s + "' (expected heads|mbr)");
}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  if (epochs == 0) out.push_back("epochs must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) out.push_back("learning rate must be finite and non-negative");
  if (batch_size == 0) out.push_back("batch size must be at least 1");
  if (!(alpha >= 0.0)) out.push_back("alpha must be non-negative");
  if (!(beta >= 0.0)) out.push_back("beta must be non-negative");
  if (!(clip_norm >= 0.0)) out.push_back("clip_norm must be non-negative");
  try {
    mc.validate();
  } catch (const ConfigError& e) {
    out.push_back(e.what());
  }
  return out;
}

void TrainConfig::validate() const {
  const auto p = problems();
  if (p.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& s : p) msg += "\n  - " + s;
  throw ConfigError(msg);
}

std::uint64_t sequence_key(const std::string& seq_id, std::uint64_t step) {
  return fnv1a64(seq_id) ^ splitmix64(step);
}

// ---- objective ---------------------------------------------------------------

namespace {

std::size_t successor_pairs(const EventSequence& s) { return s.size() > 1 ? s.size() - 1 : 0; }

struct SequenceParts {
  double nll = 0.0, ce = 0.0, se = 0.0;
};

SequenceParts sequence_loss(TppModel& model, const EventSequence& seq, const LossOptions& opt, std::size_t pairs) {
  const std::uint64_t key = sequence_key(seq.seq_id, opt.step);
  Rng drop = make_stream(opt.seed, Stream::dropout, key);
  Rng mc = make_stream(opt.seed, Stream::monte_carlo, key);

  ad::Tape tape;
  ad::Var ctx = model.forward(tape, seq, opt.training, drop).contexts;
  ad::Var nll = nll_sequence(tape, model.intensity(), ctx, seq, opt.mc, mc);
  SequenceParts out;
  out.nll = nll.scalar();
  ad::Var objective = nll;

  const std::size_t n = seq.size();
  if (n > 1) {
    std::vector<std::size_t> rows(n - 1), next_type(n - 1);
    Matrix next_gap(n - 1, 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      rows[i] = i + 1;  // h_i sits in context row i
      next_type[i] = seq.events[i + 1].type_id;
      next_gap[i] = seq.events[i + 1].t - seq.events[i].t;
    }
    ad::Var h = ad::gather_rows(ctx, rows);
    ad::Var ce = ad::cross_entropy_sum(model.type_logits(tape, h), next_type);
    ad::Var se = ad::sum(ad::square(ad::sub(model.time_gaps(tape, h), tape.constant(std::move(next_gap)))));
    out.ce = ce.scalar();
    out.se = se.scalar();
    const double p = static_cast<double>(pairs);
    objective = ad::add(objective, ad::add(ad::scale(ce, opt.alpha / p), ad::scale(se, opt.beta / p)));
  }

  if (opt.grad_scale != 0.0) {
    if (!std::isfinite(objective.scalar()))
      throw TrainingError("non-finite loss on sequence '" + seq.seq_id + "'");
    tape.backward(ad::scale(objective, opt.grad_scale));
    tape.accumulate_param_grads();
  }
  return out;
}

LossParts loss_over(TppModel& model, std::span<const EventSequence* const> seqs, const LossOptions& opt) {
  if (seqs.empty()) throw std::invalid_argument("multitask_loss: empty batch");
  LossParts parts;
  for (const auto* s : seqs) {
    parts.pairs += successor_pairs(*s);
    parts.events += s->size();
  }
  double ce = 0.0, se = 0.0;
  for (const auto* s : seqs) {
    const SequenceParts sp = sequence_loss(model, *s, opt, parts.pairs);
    parts.nll += sp.nll;
    ce += sp.ce;
    se += sp.se;
  }
  if (parts.pairs) {
    parts.ce_mean = ce / static_cast<double>(parts.pairs);
    parts.mse_mean = se / static_cast<double>(parts.pairs);
  }
  parts.total = parts.nll + opt.alpha * parts.ce_mean + opt.beta * parts.mse_mean;
  return parts;
}

}  // namespace

LossParts multitask_loss(TppModel& model, const Batch& batch, const LossOptions& opt) {
  return loss_over(model, batch.sequences, opt);
}

LossParts multitask_loss(TppModel& model, std::span<const EventSequence> seqs, const LossOptions& opt) {
  std::vector<const EventSequence*> ptrs;
  for (const auto& s : seqs) ptrs.push_back(&s);
  return loss_over(model, ptrs, opt);
}

// ---- optimizer ---------------------------------------------------------------

Adam::Adam(ParamSet& params, double lr, double beta1, double beta2, double eps)
    : params_(&params), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p->value.rows(), p->value.cols());
    v_.emplace_back(p->value.rows(), p->value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  std::size_t idx = 0;
  for (const auto& p : params_->all()) {
    Matrix& m = m_[idx];
    Matrix& v = v_[idx];
    ++idx;
    if (!p->requires_grad) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * g;
      v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
      p->value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double grad_norm(const ParamSet& params) {
  double s = 0.0;
  for (const auto& p : params.all())
    for (double g : p->grad.flat()) s += g * g;
  return std::sqrt(s);
}

// ---- prediction and metrics ------------------------------------------------------

namespace {

std::vector<NextPrediction> predictions_from(const TppModel& model, ad::Tape& tape, ad::Var ctx, const EventSequence& seq,
                                             Route route, const McConfig& mc) {
  const std::size_t n = seq.size();
  std::vector<NextPrediction> out(n);
  if (route == Route::heads) {
    const Matrix& logits = model.type_logits(tape, ctx).value();
    const Matrix& gaps = model.time_gaps(tape, ctx).value();
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = logits.row(i + 1);
      out[i].type = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      out[i].time = seq.events[i].t + gaps(i + 1, 0);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto h = ctx.value().row(i + 1);
      const double t_prev = seq.events[i].t;
      const NextTime nt = predict_next_time(model.intensity(), h, t_prev, mc);
      out[i] = {nt.time, predict_next_type(model.intensity(), h, nt.time, t_prev), nt.truncated};
    }
  }
  return out;
}

}  // namespace

std::vector<NextPrediction> predict_sequence(const TppModel& model, const EventSequence& seq, Route route,
                                             const McConfig& mc) {
  ad::Tape tape;
  Rng unused(0);
  ad::Var ctx = model.forward(tape, seq, false, unused).contexts;
  return predictions_from(model, tape, ctx, seq, route, mc);
}

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth) {
  if (predicted.empty() || predicted.size() != truth.size())
    throw std::invalid_argument("accuracy: need equal, non-zero lengths");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(predicted.size());
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.empty() || predicted.size() != truth.size())
    throw std::invalid_argument("rmse: need equal, non-zero lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

nlohmann::json EvalMetrics::to_json() const {
  return {{"ll", ll},
          {"ll_per_event", ll_per_event},
          {"events", events},
          {"acc", acc},
          {"rmse", rmse_scaled},
          {"rmse_scaled", rmse_scaled},
          {"rmse_unscaled", rmse_unscaled},
          {"predictions", predictions},
          {"truncated", truncated},
          {"route", to_string(route)}};
}

EvalMetrics evaluate(const TppModel& model, std::span<const EventSequence> seqs, const McConfig& mc, Route route,
                     double time_scale, std::uint64_t seed) {
  if (seqs.empty()) throw std::invalid_argument("evaluate: no sequences");
  mc.validate();
  EvalMetrics m;
  m.route = route;
  std::vector<std::size_t> pred_type, true_type;
  std::vector<double> pred_time, true_time;
  Rng unused(0);
  for (const auto& seq : seqs) {
    ad::Tape tape;
    ad::Var ctx = model.forward(tape, seq, false, unused).contexts;
    Rng rng = make_stream(seed, Stream::eval, fnv1a64(seq.seq_id));
    const CompensatorPlan plan = plan_compensator(seq, mc.samples, rng);
    m.ll += sequence_log_likelihood(tape, model.intensity(), ctx, seq, plan).log_likelihood.scalar();
    m.events += seq.size();
    if (seq.size() < 2) continue;
    const auto preds = predictions_from(model, tape, ctx, seq, route, mc);
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      pred_type.push_back(preds[i].type);
      true_type.push_back(seq.events[i + 1].type_id);
      pred_time.push_back(preds[i].time);
      true_time.push_back(seq.events[i + 1].t);
      m.truncated += preds[i].truncated;
    }
  }
  m.ll_per_event = m.ll / static_cast<double>(m.events);
  m.predictions = pred_type.size();
  if (m.predictions) {
    m.acc = accuracy(pred_type, true_type);
    m.rmse_scaled = rmse(pred_time, true_time);
    m.rmse_unscaled = time_scale * m.rmse_scaled;
  }
  return m;
}

// ---- training loop -------------------------------------------------------------

TrainResult train(TppModel& model, const Splits& scaled, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (scaled.train.empty() || scaled.val.empty()) throw ConfigError("training needs non-empty train and validation splits");

  ParamSet& params = model.params();
  Adam opt(params, cfg.lr);
  TrainResult result;
  result.best_val_ll = -std::numeric_limits<double>::infinity();
  std::vector<Matrix> best;
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  LossOptions lo;
  lo.alpha = cfg.alpha;
  lo.beta = cfg.beta;
  lo.mc = cfg.mc;
  lo.training = true;
  lo.seed = cfg.seed;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(scaled.train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_stream(cfg.seed, Stream::shuffle, epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<const EventSequence*> batch;
      for (std::size_t j = b; j < std::min(order.size(), b + cfg.batch_size); ++j) batch.push_back(&scaled.train[order[j]]);
      params.zero_grad();
      lo.step = ++step;
      lo.grad_scale = 1.0 / static_cast<double>(batch.size());
      const LossParts parts = loss_over(model, batch, lo);
      if (!std::isfinite(parts.total))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      if (cfg.clip_norm > 0.0) {
        const double norm = grad_norm(params);
        if (norm > cfg.clip_norm)
          for (const auto& p : params.all())
            for (double& g : p->grad.flat()) g *= cfg.clip_norm / norm;
      }
      opt.step();
      epoch_loss += parts.total;
    }

    const EvalMetrics val = evaluate(model, scaled.val, cfg.mc, cfg.route, 1.0, cfg.seed);
    HistoryRow row{epoch, epoch_loss / static_cast<double>(scaled.train.size()), val.ll_per_event, val.acc,
                   val.rmse_scaled};
    result.history.push_back(row);
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %zu  train_loss %.6f  val_ll %.6f  val_acc %.4f  val_rmse %.6f\n", epoch,
                    row.train_loss, row.val_ll, row.val_acc, row.val_rmse);
      *log << buf << std::flush;
    }

    if (val.ll_per_event > result.best_val_ll) {
      result.best_val_ll = val.ll_per_event;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& p : params.all()) best.push_back(p->value);
      since_best = 0;
    } else if (cfg.patience && ++since_best >= cfg.patience) {
      break;
    }
  }

  if (!best.empty()) {
    std::size_t i = 0;
    for (const auto& p : params.all()) p->value = best[i++];
  }
  return result;
}

void write_history_csv(std::ostream& out, std::span<const HistoryRow> rows) {
  out << "epoch,train_loss,val_ll,val_acc,val_rmse\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_ll, r.val_acc,
                  r.val_rmse);
    out << buf;
  }
}

}  // namespace taltpp

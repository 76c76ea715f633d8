#pragma once

// Multi-task objective, Adam, the training loop, and evaluation metrics.
//
// Sequences are never padded into a shared tensor: each one gets its own tape
// and its own random streams keyed by (seed, seq_id, step), so a sequence's
// loss does not depend on which other sequences share its batch.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "taltpp/event_data.hpp"
#include "taltpp/intensity.hpp"
#include "taltpp/model.hpp"

namespace taltpp {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Where accuracy and RMSE predictions come from: the auxiliary heads, or the
// intensity (expected next time, then argmax type at that time).
enum class Route { heads, mbr };
const char* to_string(Route r);
Route route_from_string(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 20;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  double alpha = 1.0;  // type cross-entropy weight
  double beta = 1.0;   // time regression weight
  std::uint64_t seed = 0;
  std::size_t patience = 0;  // 0 trains the fixed number of epochs
  double clip_norm = 0.0;    // global gradient-norm clip, 0 disables
  Route route = Route::heads;
  McConfig mc;

  std::vector<std::string> problems() const;
  void validate() const;
};

struct LossOptions {
  double alpha = 1.0;
  double beta = 1.0;
  McConfig mc;
  bool training = false;     // enables dropout
  std::uint64_t seed = 0;
  std::uint64_t step = 0;    // mixed into the per-sequence random streams
  double grad_scale = 0.0;   // when non-zero, backpropagates grad_scale * loss
};

struct LossParts {
  double nll = 0.0;       // -sum of sequence log-likelihoods
  double ce_mean = 0.0;   // mean type cross-entropy over successor pairs
  double mse_mean = 0.0;  // mean squared next-gap error over successor pairs
  double total = 0.0;     // nll + alpha * ce_mean + beta * mse_mean
  std::size_t events = 0;
  std::size_t pairs = 0;
};

// Events without a successor contribute only to the likelihood term.
LossParts multitask_loss(TppModel& model, const Batch& batch, const LossOptions& opt);
LossParts multitask_loss(TppModel& model, std::span<const EventSequence> seqs, const LossOptions& opt);

// Key for a sequence's random streams.
std::uint64_t sequence_key(const std::string& seq_id, std::uint64_t step);

class Adam {
 public:
  Adam(ParamSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();
  std::size_t steps() const { return t_; }

 private:
  ParamSet* params_;
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

double grad_norm(const ParamSet& params);

struct NextPrediction {
  double time = 0.0;  // absolute, scaled units
  std::size_t type = 0;
  bool truncated = false;
};

// Prediction of the event following event i (1-based), for i = 1..N.
std::vector<NextPrediction> predict_sequence(const TppModel& model, const EventSequence& seq, Route route,
                                             const McConfig& mc);

double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> truth);
double rmse(std::span<const double> predicted, std::span<const double> truth);

struct EvalMetrics {
  double ll = 0.0;  // summed log-likelihood
  double ll_per_event = 0.0;
  std::size_t events = 0;
  double acc = 0.0;
  double rmse_scaled = 0.0;
  double rmse_unscaled = 0.0;
  std::size_t predictions = 0;
  std::size_t truncated = 0;
  Route route = Route::heads;

  nlohmann::json to_json() const;
};

// `seqs` are already scaled; `time_scale` converts RMSE back to data units.
EvalMetrics evaluate(const TppModel& model, std::span<const EventSequence> seqs, const McConfig& mc, Route route,
                     double time_scale, std::uint64_t seed);

struct HistoryRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_ll = 0.0;
  double val_acc = 0.0;
  double val_rmse = 0.0;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  std::size_t best_epoch = 0;
  double best_val_ll = 0.0;
};

// Adam over shuffled batches; restores the parameters of the epoch with the
// best validation log-likelihood per event. `log` receives one line per epoch.
TrainResult train(TppModel& model, const Splits& scaled, const TrainConfig& cfg, std::ostream* log = nullptr);

void write_history_csv(std::ostream& out, std::span<const HistoryRow> rows);

}  // namespace taltpp

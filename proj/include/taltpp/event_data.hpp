#pragma once

// Marked event sequences: JSON Lines ingestion, the type vocabulary, time
// normalization, deterministic splitting and batching.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taltpp/errors.hpp"

namespace taltpp {

struct Event {
  double t = 0.0;
  std::size_t type_id = 0;
  std::string type_text;
};

struct EventSequence {
  std::string seq_id;
  std::vector<Event> events;
  double t_end = 0.0;
  // False when the source omitted t_end; t_end then equals the last event time.
  bool explicit_end = false;

  std::size_t size() const { return events.size(); }
  double last_time() const { return events.back().t; }
};

// Throws ValidationError naming the sequence when an invariant fails.
void validate(const EventSequence& seq, std::size_t num_types);

// type_text <-> type_id in first-appearance order.
class TypeVocab {
 public:
  // Returns the id of text, adding it when `grow` is true.
  std::optional<std::size_t> lookup(const std::string& text) const;
  std::size_t intern(const std::string& text);
  const std::string& text(std::size_t id) const { return names_.at(id); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  friend bool operator==(const TypeVocab&, const TypeVocab&) = default;

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> ids_;
};

struct Dataset {
  std::vector<EventSequence> sequences;
  TypeVocab types;
};

// Reads one sequence per line. With `closed` set, type names must already be
// present in it (unseen names are a ValidationError); otherwise the vocabulary
// is built in first-appearance order.
Dataset load_sequences(const std::filesystem::path& path, const TypeVocab* closed = nullptr);
Dataset parse_sequences(std::istream& in, const TypeVocab* closed = nullptr);

void write_sequences(const std::filesystem::path& path, std::span<const EventSequence> sequences);
void write_sequences(std::ostream& out, std::span<const EventSequence> sequences);

// Maps t -> (t - offset) / scale.
struct TimeScaler {
  double scale = 1.0;
  double offset = 0.0;

  double apply(double t) const { return (t - offset) / scale; }
  double invert(double t) const { return t * scale + offset; }
  EventSequence apply(const EventSequence& seq) const;
  EventSequence invert(const EventSequence& seq) const;
  std::vector<EventSequence> apply(std::span<const EventSequence> seqs) const;
};

// scale = mean consecutive inter-event gap over all sequences; offset = 0.
TimeScaler fit_time_scaler(std::span<const EventSequence> train);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct Splits {
  std::vector<EventSequence> train;
  std::vector<EventSequence> val;
  std::vector<EventSequence> test;
};

// Seeded Fisher-Yates shuffle, then contiguous train/val/test partition.
// Val and test sizes round down; the remainder goes to train.
Splits split_dataset(std::vector<EventSequence> sequences, const SplitRatios& ratios, std::uint64_t seed);

// Permutation used by split_dataset (exposed for reproducibility checks).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

struct Batch {
  std::vector<const EventSequence*> sequences;
  std::vector<std::size_t> lengths;
  std::size_t max_len = 0;
  // Row-major batch x max_len; 1 exactly at real-event positions.
  std::vector<std::uint8_t> pad_mask;

  std::size_t size() const { return sequences.size(); }
  bool valid(std::size_t b, std::size_t i) const { return pad_mask[b * max_len + i] != 0; }
};

std::vector<Batch> batch_pad(std::span<const EventSequence> sequences, std::size_t max_batch);

}  // namespace taltpp

#include "taltpp/event_data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "taltpp/rng.hpp"

namespace taltpp {

using nlohmann::json;

void validate(const EventSequence& seq, std::size_t num_types) {
  const std::string who = "sequence '" + seq.seq_id + "': ";
  if (seq.events.empty()) throw ValidationError(who + "empty sequence");
  for (std::size_t i = 0; i < seq.events.size(); ++i) {
    const Event& e = seq.events[i];
    if (!std::isfinite(e.t) || e.t < 0.0) throw ValidationError(who + "timestamp must be finite and non-negative");
    if (e.type_id >= num_types) throw ValidationError(who + "type id out of range");
    if (e.type_text.empty()) throw ValidationError(who + "empty type name");
    if (i > 0 && !(e.t > seq.events[i - 1].t)) throw ValidationError(who + "timestamps not strictly increasing");
  }
  if (!(seq.t_end >= seq.last_time())) throw ValidationError(who + "t_end precedes the last event");
}

std::optional<std::size_t> TypeVocab::lookup(const std::string& text) const {
  auto it = ids_.find(text);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t TypeVocab::intern(const std::string& text) {
  if (auto id = lookup(text)) return *id;
  ids_.emplace(text, names_.size());
  names_.push_back(text);
  return names_.size() - 1;
}

Dataset parse_sequences(std::istream& in, const TypeVocab* closed) {
  Dataset ds;
  if (closed) ds.types = *closed;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    EventSequence seq;
    try {
      if (!j.is_object()) throw ParseError("expected a JSON object", lineno);
      seq.seq_id = j.contains("seq_id") ? j.at("seq_id").get<std::string>() : "line" + std::to_string(lineno);
      const json& evs = j.at("events");
      if (!evs.is_array()) throw ParseError("'events' must be an array", lineno);
      for (const json& e : evs) {
        Event ev;
        ev.t = e.at("t").get<double>();
        ev.type_text = e.at("type").get<std::string>();
        if (closed) {
          auto id = ds.types.lookup(ev.type_text);
          if (!id) throw ValidationError("sequence '" + seq.seq_id + "': unseen event type '" + ev.type_text + "'");
          ev.type_id = *id;
        } else {
          ev.type_id = ds.types.intern(ev.type_text);
        }
        seq.events.push_back(std::move(ev));
      }
      if (j.contains("t_end") && !j.at("t_end").is_null()) {
        seq.t_end = j.at("t_end").get<double>();
        seq.explicit_end = true;
      } else if (!seq.events.empty()) {
        seq.t_end = seq.events.back().t;
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("schema error: ") + e.what(), lineno);
    }
    validate(seq, ds.types.size());
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

Dataset load_sequences(const std::filesystem::path& path, const TypeVocab* closed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_sequences(in, closed);
}

void write_sequences(std::ostream& out, std::span<const EventSequence> sequences) {
  for (const auto& s : sequences) {
    json j;
    j["seq_id"] = s.seq_id;
    if (s.explicit_end) j["t_end"] = s.t_end;
    json evs = json::array();
    for (const auto& e : s.events) evs.push_back({{"t", e.t}, {"type", e.type_text}});
    j["events"] = std::move(evs);
    out << j.dump() << '\n';
  }
}

void write_sequences(const std::filesystem::path& path, std::span<const EventSequence> sequences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_sequences(out, sequences);
}

EventSequence TimeScaler::apply(const EventSequence& seq) const {
  EventSequence s = seq;
  for (auto& e : s.events) e.t = apply(e.t);
  s.t_end = apply(seq.t_end);
  return s;
}

EventSequence TimeScaler::invert(const EventSequence& seq) const {
  EventSequence s = seq;
  for (auto& e : s.events) e.t = invert(e.t);
  s.t_end = invert(seq.t_end);
  return s;
}

std::vector<EventSequence> TimeScaler::apply(std::span<const EventSequence> seqs) const {
  std::vector<EventSequence> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(apply(s));
  return out;
}

TimeScaler fit_time_scaler(std::span<const EventSequence> train) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : train)
    for (std::size_t i = 1; i < s.events.size(); ++i) {
      total += s.events[i].t - s.events[i - 1].t;
      ++count;
    }
  if (count == 0) throw ValidationError("cannot fit scaler: no sequence has two or more events");
  return TimeScaler{total / static_cast<double>(count), 0.0};
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng = make_stream(seed, Stream::split);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
  return perm;
}

Splits split_dataset(std::vector<EventSequence> sequences, const SplitRatios& r, std::uint64_t seed) {
  if (!(r.train > 0 && r.val > 0 && r.test > 0)) throw ConfigError("split ratios must be positive");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  const std::size_t n = sequences.size();
  const auto nval = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.val + 1e-9));
  const auto ntest = static_cast<std::size_t>(std::floor(static_cast<double>(n) * r.test + 1e-9));
  if (nval == 0 || ntest == 0 || nval + ntest >= n)
    throw ConfigError("split would leave an empty partition (" + std::to_string(n) + " sequences)");
  const std::vector<std::size_t> perm = seeded_permutation(n, seed);
  Splits out;
  const std::size_t ntrain = n - nval - ntest;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < ntrain ? out.train : (i < ntrain + nval ? out.val : out.test);
    dst.push_back(std::move(sequences[perm[i]]));
  }
  return out;
}

std::vector<Batch> batch_pad(std::span<const EventSequence> sequences, std::size_t max_batch) {
  if (max_batch == 0) throw ConfigError("batch size must be at least 1");
  std::vector<Batch> out;
  for (std::size_t start = 0; start < sequences.size(); start += max_batch) {
    Batch b;
    const std::size_t end = std::min(sequences.size(), start + max_batch);
    for (std::size_t i = start; i < end; ++i) {
      b.sequences.push_back(&sequences[i]);
      b.lengths.push_back(sequences[i].size());
      b.max_len = std::max(b.max_len, sequences[i].size());
    }
    b.pad_mask.assign(b.size() * b.max_len, 0);
    for (std::size_t r = 0; r < b.size(); ++r) std::fill_n(b.pad_mask.begin() + r * b.max_len, b.lengths[r], 1);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace taltpp

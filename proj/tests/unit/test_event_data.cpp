#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "taltpp/event_data.hpp"
#include "taltpp/rng.hpp"

using namespace taltpp;

namespace {

Dataset parse(const std::string& text, const TypeVocab* closed = nullptr) {
  std::istringstream in(text);
  return parse_sequences(in, closed);
}

EventSequence make_seq(const std::string& id, std::vector<double> times) {
  EventSequence s;
  s.seq_id = id;
  for (double t : times) s.events.push_back({t, 0, "a"});
  s.t_end = times.back();
  return s;
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("one line with two types") {
  const Dataset d = parse(R"({"seq_id":"a","t_end":10.0,"events":[{"t":1.0,"type":"A"},{"t":2.5,"type":"B"}]})");
  REQUIRE(d.sequences.size() == 1);
  const EventSequence& s = d.sequences[0];
  CHECK(s.seq_id == "a");
  CHECK(s.size() == 2);
  CHECK(d.types.size() == 2);
  CHECK(s.events[1].type_id == 1);
  CHECK(s.events[1].type_text == "B");
  CHECK(s.t_end == 10.0);
  CHECK(s.explicit_end);
}

TEST_CASE("missing horizon defaults to the last event time") {
  const Dataset d = parse(R"({"seq_id":"a","events":[{"t":1.0,"type":"A"},{"t":2.5,"type":"A"}]})");
  CHECK(d.sequences[0].t_end == 2.5);
  CHECK_FALSE(d.sequences[0].explicit_end);
}

TEST_CASE("invariant violations") {
  CHECK(error_of(R"({"seq_id":"a","events":[]})").find("empty sequence") != std::string::npos);
  const std::string order = error_of(R"({"seq_id":"zz","events":[{"t":3.0,"type":"A"},{"t":2.0,"type":"A"}]})");
  CHECK(order.find("timestamps not strictly increasing") != std::string::npos);
  CHECK(order.find("zz") != std::string::npos);
  CHECK(error_of(R"({"seq_id":"a","events":[{"t":1.0,"type":"A"},{"t":1.0,"type":"A"}]})").find("strictly") !=
        std::string::npos);
  CHECK(error_of(R"({"seq_id":"a","t_end":0.5,"events":[{"t":1.0,"type":"A"}]})").find("t_end") != std::string::npos);
}

TEST_CASE("malformed lines report their line number") {
  try {
    parse("{\"seq_id\":\"a\",\"events\":[{\"t\":1,\"type\":\"A\"}]}\n\n{not json\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse(R"({"seq_id":"a","events":[{"time":1.0,"type":"A"}]})"), ParseError);
}

TEST_CASE("closed vocabulary rejects unseen types") {
  TypeVocab v;
  v.intern("A");
  CHECK_NOTHROW(parse(R"({"seq_id":"a","events":[{"t":1.0,"type":"A"}]})", &v));
  CHECK_THROWS_AS(parse(R"({"seq_id":"a","events":[{"t":1.0,"type":"B"}]})", &v), ValidationError);
}

TEST_CASE("vocabulary is stable across reloads and follows first appearance") {
  const std::string text =
      R"({"seq_id":"a","events":[{"t":1.0,"type":"C"},{"t":2.0,"type":"A"}]})"
      "\n"
      R"({"seq_id":"b","events":[{"t":1.0,"type":"B"},{"t":2.0,"type":"C"}]})";
  const Dataset d1 = parse(text), d2 = parse(text);
  CHECK(d1.types == d2.types);
  CHECK(d1.types.names() == std::vector<std::string>{"C", "A", "B"});
}

TEST_CASE("write then load round-trips") {
  const Dataset d = parse(R"({"seq_id":"a","t_end":10.0,"events":[{"t":0.1,"type":"x y"},{"t":2.5,"type":"B"}]})");
  std::ostringstream out;
  write_sequences(out, d.sequences);
  const Dataset back = parse(out.str());
  CHECK(back.sequences[0].events[0].t == 0.1);
  CHECK(back.sequences[0].events[0].type_text == "x y");
  CHECK(back.sequences[0].t_end == 10.0);
  CHECK(back.types == d.types);
}

TEST_CASE("time scaler") {
  SUBCASE("unit gaps give the identity") {
    const std::vector<EventSequence> s{make_seq("a", {0, 1, 2, 3})};
    const TimeScaler sc = fit_time_scaler(s);
    CHECK(sc.scale == 1.0);
    CHECK(sc.apply(s[0]).events[2].t == 2.0);
  }
  SUBCASE("arithmetic mean of gaps") {
    const std::vector<EventSequence> s{make_seq("a", {0, 2, 6})};
    CHECK(fit_time_scaler(s).scale == 3.0);
  }
  SUBCASE("brute-force mean over many sequences") {
    Rng rng(4);
    std::vector<EventSequence> seqs;
    std::vector<double> gaps;
    for (int k = 0; k < 20; ++k) {
      std::vector<double> t{rng.uniform()};
      const int n = 1 + static_cast<int>(rng.index(6));
      for (int i = 1; i < n; ++i) t.push_back(t.back() + 0.01 + rng.exponential(0.5));
      seqs.push_back(make_seq("s" + std::to_string(k), t));
      for (std::size_t i = 1; i < t.size(); ++i) gaps.push_back(t[i] - t[i - 1]);
    }
    const double expect = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    CHECK(fit_time_scaler(seqs).scale == doctest::Approx(expect).epsilon(1e-14));

    const TimeScaler sc = fit_time_scaler(seqs);
    for (const auto& s : seqs) {
      const EventSequence back = sc.invert(sc.apply(s));
      for (std::size_t i = 0; i < s.size(); ++i)
        CHECK(std::abs(back.events[i].t - s.events[i].t) <= 1e-12 * std::abs(s.events[i].t));
    }
  }
  SUBCASE("all singletons cannot be fitted") {
    const std::vector<EventSequence> s{make_seq("a", {1.0}), make_seq("b", {2.0})};
    try {
      fit_time_scaler(s);
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("cannot fit scaler") != std::string::npos);
    }
  }
}

TEST_CASE("split sizes, determinism and coverage") {
  std::vector<EventSequence> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back(make_seq("s" + std::to_string(i), {1.0 + i}));
  const Splits a = split_dataset(seqs, {0.8, 0.1, 0.1}, 42);
  CHECK(a.train.size() == 8);
  CHECK(a.val.size() == 1);
  CHECK(a.test.size() == 1);
  const Splits b = split_dataset(seqs, {0.8, 0.1, 0.1}, 42);
  for (std::size_t i = 0; i < 8; ++i) CHECK(a.train[i].seq_id == b.train[i].seq_id);
  std::set<std::string> ids;
  for (const auto* part : {&a.train, &a.val, &a.test})
    for (const auto& s : *part) ids.insert(s.seq_id);
  CHECK(ids.size() == 10);

  CHECK_THROWS_AS(split_dataset(std::vector<EventSequence>(seqs.begin(), seqs.begin() + 5), {0.8, 0.1, 0.1}, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(seqs, {0.8, 0.1, 0.2}, 1), ConfigError);
}

TEST_CASE("permutation matches a reference Fisher-Yates shuffle") {
  auto reference = [](std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    Rng rng = make_stream(seed, Stream::split);
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = rng.index(i + 1);
      std::swap(p[i], p[j]);
    }
    return p;
  };
  CHECK(seeded_permutation(100, 7) == reference(100, 7));
  CHECK(seeded_permutation(100, 8) == reference(100, 8));
  CHECK(seeded_permutation(100, 7) != seeded_permutation(100, 8));
}

TEST_CASE("batch padding masks") {
  const std::vector<EventSequence> seqs{make_seq("a", {1, 2, 3}), make_seq("b", {1, 2, 3, 4, 5}), make_seq("c", {1})};
  const auto batches = batch_pad(seqs, 2);
  REQUIRE(batches.size() == 2);
  const Batch& b = batches[0];
  CHECK(b.max_len == 5);
  CHECK(b.lengths == std::vector<std::size_t>{3, 5});
  std::size_t trues0 = 0, trues1 = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    trues0 += b.valid(0, i);
    trues1 += b.valid(1, i);
  }
  CHECK(trues0 == 3);
  CHECK(trues1 == 5);
  CHECK(batches[1].max_len == 1);
  CHECK(batches[1].valid(0, 0));
  CHECK_THROWS_AS(batch_pad(seqs, 0), ConfigError);
}

TEST_CASE("file loading") {
  const auto path = std::filesystem::temp_directory_path() / "taltpp_event_data_test.jsonl";
  {
    std::ofstream out(path);
    out << R"({"seq_id":"a","events":[{"t":1.0,"type":"A"}]})" << "\n";
  }
  CHECK(load_sequences(path).sequences.size() == 1);
  std::filesystem::remove(path);
  CHECK_THROWS(load_sequences(path));
}

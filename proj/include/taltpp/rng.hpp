#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace taltpp {

// Seeded pseudo-random stream. Draws are derived from raw 64-bit engine
// output with fixed transforms, so a (seed, stream) pair yields the same
// sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform on (0, 1]; safe under log().
  double uniform_pos() { return 1.0 - uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0);
  double exponential(double rate);
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Stable 64-bit FNV-1a; used to key per-sequence streams and config hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// Component ids for independent streams derived from one user seed.
enum class Stream : std::uint64_t {
  init = 1,
  split = 2,
  shuffle = 3,
  dropout = 4,
  monte_carlo = 5,
  synth = 6,
  eval = 7,
};

inline Rng make_stream(std::uint64_t seed, Stream component, std::uint64_t sub = 0) {
  return Rng(seed, splitmix64(static_cast<std::uint64_t>(component)) ^ splitmix64(sub + 0x9e3779b97f4a7c15ULL));
}

}  // namespace taltpp

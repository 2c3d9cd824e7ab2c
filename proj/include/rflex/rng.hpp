#pragma once

#include <cstdint>

#include "rflex/types.hpp"

namespace rflex {

/// Counter-based 64-bit generator: draw i of stream (seed, stream) is a pure
/// function of (seed, stream, i). Uses the SplitMix64 finalizer as the mixing
/// function, so sequences are reproducible across platforms and languages.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (both variates used).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

Vector normal_vector(CounterRng& rng, Index n);
Matrix normal_matrix(CounterRng& rng, Index rows, Index cols);

}  // namespace rflex

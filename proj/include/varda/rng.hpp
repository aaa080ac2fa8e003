#pragma once

#include <cstdint>

#include "varda/linalg.hpp"

namespace varda {

/// Seed plus stream id. Identical pairs reproduce identical draws; distinct
/// stream ids give independent streams for parallel experiment cells.
struct RandomSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  /// Derive a child stream, e.g. one per (ensemble size, replicate, time).
  RandomSeed child(std::uint64_t salt) const;
};

/// xoshiro256++ initialized by splitmix64 over (seed, stream). All draws are
/// pure integer/IEEE arithmetic, no global state.
class Rng {
 public:
  explicit Rng(RandomSeed s);

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();   // standard normal (Box-Muller)

  /// Index draw from a probability vector (entries >= 0, sum ~ 1).
  int categorical(const Vector& probs);

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace varda

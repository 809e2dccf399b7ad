#pragma once

#include <cstdint>

namespace poison {

// Deterministic seedable random stream, PCG32 (O'Neill, XSH-RR 64/32).
//
// The generator is pinned to this exact algorithm so that a (seed, stream_id)
// pair reproduces the same draw sequence on every platform and build. Distinct
// stream ids select distinct PCG increments and therefore disjoint sequences.
// Integer and uniform draws are bit-exact everywhere; normal() additionally
// depends on libm rounding of log/sqrt/cos.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform in [0, 1), 53 random bits.
  double next_double();

  double uniform(double lo, double hi);

  // Unbiased integer in [0, bound); bound must be positive.
  std::uint64_t next_below(std::uint64_t bound);

  // Standard normal via Box-Muller; second value of each pair is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stable 64-bit mix used to derive stream ids from structured keys
// (SplitMix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

}  // namespace poison

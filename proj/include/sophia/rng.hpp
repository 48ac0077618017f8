#pragma once

#include <cstdint>
#include <span>

namespace sophia {

/// Counter-based deterministic random stream. The i-th draw is a pure
/// function of (seed, step, tag, i), so estimator sampling and batch sampling
/// never interleave and runs are byte-reproducible regardless of evaluation
/// order.
class RngStream {
 public:
  enum Tag : uint64_t {
    kInit = 1,
    kData = 2,
    kBatch = 3,
    kEstimator = 4,
    kEval = 5,
    kGeneric = 6,
  };

  RngStream(uint64_t seed, uint64_t step, uint64_t tag);

  uint64_t next_u64();
  /// Uniform in (0, 1].
  double uniform01();
  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  /// Uniform integer in [0, n).
  int64_t below(int64_t n);
  /// Inverse-CDF sample from a probability vector (entries >= 0, sum ~ 1).
  int32_t categorical(std::span<const double> probs);

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace sophia

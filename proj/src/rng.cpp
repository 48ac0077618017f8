#include "sophia/rng.hpp"

#include <cmath>

#include "sophia/errors.hpp"

namespace sophia {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer: bijective 64-bit mix with good avalanche.
uint64_t mix64(uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(uint64_t seed, uint64_t step, uint64_t tag)
    : key_(mix64(mix64(mix64(seed) ^ step) ^ (tag * kGolden))) {}

uint64_t RngStream::next_u64() { return mix64(key_ + counter_++ * kGolden); }

double RngStream::uniform01() {
  // 53-bit mantissa, shifted into (0, 1].
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RngStream::normal() {
  double u1 = uniform01();
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int64_t RngStream::below(int64_t n) {
  if (n <= 0) throw ParameterError("RngStream::below needs n > 0");
  // Multiply-shift map of a 64-bit draw onto [0, n); bias is < 2^-64 * n.
  return static_cast<int64_t>(
      (static_cast<unsigned __int128>(next_u64()) * static_cast<uint64_t>(n)) >> 64);
}

int32_t RngStream::categorical(std::span<const double> probs) {
  if (probs.empty()) throw ParameterError("categorical on empty probability vector");
  double u = uniform01();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u <= acc) return static_cast<int32_t>(i);
  }
  return static_cast<int32_t>(probs.size() - 1);
}

}  // namespace sophia

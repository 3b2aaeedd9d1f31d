#pragma once

#include <cstdint>
#include <random>

namespace spgs {

/// SplitMix64 finalizer; a bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of stream `index` within family `purpose` of a master seed. Streams
/// depend only on (master, purpose, index), never on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t purpose,
                                    std::uint64_t index) {
  return mix64(mix64(master ^ mix64(purpose)) + index);
}

/// Per-replicate generator with platform-independent variate transforms.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
  double normal();
  double exponential(double rate);
  bool bernoulli(double q) { return uniform() < q; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace spgs

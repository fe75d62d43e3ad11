#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace ilt {

/// Portable random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The distributions are implemented here rather than taken from
/// <random>, because the standard leaves their algorithms to the library
/// vendor:
///   uniform()      (u >> 11) * 2^-53, in [0, 1)
///   uniform(a, b)  a + (b - a) * uniform()
///   normal()       Box-Muller on two uniforms, cosine branch, no caching
///   index(n)       rejection sampling on the top bits, unbiased in [0, n)
/// Any implementation following these rules reproduces our datasets.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[index(i)]);
    }
  }

private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent child seed from a parent seed and a stream tag:
/// mix64(parent ^ fnv1a64(tag)).
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag);

/// Uniformly random permutation of 0..n-1.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

/// Uniformly random permutation of 0..n-1 with no fixed points (n >= 2).
/// Draws permutations until one has no fixed point.
std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng);

}  // namespace ilt

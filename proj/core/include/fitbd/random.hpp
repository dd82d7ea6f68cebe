#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace fitbd {

// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Seed for a named sub-stream, e.g. derive_seed(root, client_id, round).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) noexcept;

// FNV-1a over bytes; stable across platforms.
std::uint64_t hash_bytes(std::string_view bytes) noexcept;

// Seeded random stream. The engine is std::mt19937_64 (fully specified by the
// standard); the draws below are computed here rather than through
// <random> distributions, whose outputs are implementation-defined, so that
// generated data is bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  // Unbiased integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);
  bool bernoulli(double p);
  // Standard normal via Box-Muller (one output per call).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fitbd

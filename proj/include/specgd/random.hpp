#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace specgd {

// Counter-based randomness: every draw is a pure function of
// (key, counter), so a replication's stream does not depend on how work is
// scheduled across threads.

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Order-sensitive hash of a list of words, used to derive per-task seeds.
constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
  return h;
}

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key, std::uint64_t stream = 0) noexcept
      : key_(hash_words({key, stream})) {}

  /// Raw 64 bits for a given counter.
  constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
    return mix64(key_ ^ mix64(counter + 0x2545f4914f6cdd1dULL));
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const noexcept {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_open0(std::uint64_t counter) const noexcept {
    return (static_cast<double>(bits(counter) >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Standard normal by Box-Muller; consumes counters 2k and 2k+1.
  double normal(std::uint64_t k) const noexcept {
    const double u1 = uniform_open0(2 * k);
    const double u2 = uniform(2 * k + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

/// Sequential convenience wrapper over CounterRng.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key, std::uint64_t stream = 0) noexcept : rng_(key, stream) {}

  std::uint64_t next_bits() noexcept { return rng_.bits(counter_++); }
  double uniform() noexcept { return rng_.uniform(counter_++); }
  double normal() noexcept { return rng_.normal(counter_++); }

  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift; the tiny modulo bias is irrelevant here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_bits()) * bound) >> 64);
  }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

}  // namespace specgd

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace hopchaos {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Key of an independent stream addressed by (master, index...). Disorder
/// replicas and per-worker MC streams are all derived this way so that a run
/// is reproducible from the master seed alone.
constexpr std::uint64_t derive_seed(std::uint64_t master) noexcept { return splitmix64(master); }

template <class... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, Rest... rest) noexcept {
  const std::uint64_t mixed = splitmix64(splitmix64(master) ^ splitmix64(index + 0x632BE59BD9B4E019ull));
  return derive_seed(mixed, static_cast<std::uint64_t>(rest)...);
}

/// Counter-based generator: draw n is splitmix64(key + n * golden gamma).
/// Satisfies UniformRandomBitGenerator, so it composes with <random>.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept : key_(key), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return splitmix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ull); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1), safe for logarithms.
  double open_uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() { return normal_(*this); }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace hopchaos

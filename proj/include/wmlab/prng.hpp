#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace wmlab {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer (increment included). A bijection on u64.
constexpr std::uint64_t mix64(std::uint64_t x) {
  std::uint64_t z = x + kGoldenGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Top 53 bits scaled into [0,1).
constexpr double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based stream: each draw adds the golden gamma to the state and
/// emits to_unit(mix64(state)). Because the state is a plain counter, the
/// i-th output of a stream can be computed without generating the first i.
struct PrngState {
  std::uint64_t state = 0;

  double next_unit() {
    state += kGoldenGamma;
    return to_unit(mix64(state));
  }

  std::uint64_t next_u64() {
    state += kGoldenGamma;
    return mix64(state);
  }

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t next_below(std::uint64_t bound) {
    auto v = static_cast<std::uint64_t>(next_unit() * static_cast<double>(bound));
    return v < bound ? v : bound - 1;
  }
};

// Zero-based index-th output of the stream starting at `seed`.
constexpr double unit_at(std::uint64_t seed, std::uint64_t index) {
  return to_unit(mix64(seed + (index + 1) * kGoldenGamma));
}

/// Secret key plus the number of preceding tokens mixed into each seed.
/// prefix_length == 0 gives one global, context-free seed.
struct SeedContext {
  std::uint64_t hash_key = 0;
  std::size_t prefix_length = 1;
};

std::uint64_t seed_from_context(const SeedContext& sc,
                                std::span<const std::uint32_t> context);

// Independent substream for the index-th unit of work under `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(base ^ mix64(index));
}

}  // namespace wmlab

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace lucenet {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer, used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Seed of a named sub-stream. All randomness in a run descends from one
/// root seed through these names ("shuffle", "dropout", "augment", "init", ...).
constexpr std::uint64_t stream_seed(std::uint64_t root, std::string_view name,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(root ^ fnv1a(name)) + mix64(index + 1));
}

inline Rng make_stream(std::uint64_t root, std::string_view name,
                       std::uint64_t index = 0) {
  return Rng(stream_seed(root, name, index));
}

/// Uniform double in [0, 1) with a fixed 53-bit construction, so streams are
/// reproducible independently of the standard library's distribution code.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Fisher-Yates on `uniform01`, independent of std::shuffle's implementation.
template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(items[i - 1], items[j < i ? j : i - 1]);
  }
}

}  // namespace lucenet

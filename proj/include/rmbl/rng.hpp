#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>

namespace rmbl {

// Counter-based random stream. Draw i from stream k is a pure function
// mix(k, i), so streams can be split by deriving child keys and a run is
// reproducible from its root seed alone. Splitting never shares counters
// between parent and child.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(std::uint64_t key) : key_(mix(key, 0x6a09e667f3bcc909ull)) {}

  static RngStream from_name(std::string_view name, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ seed;
    for (char c : name) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return RngStream(h);
  }

  RngStream split(std::uint64_t child) const { return RngStream(mix(key_, child ^ 0x9e3779b97f4a7c15ull)); }

  std::uint64_t next_u64() { return mix(key_, counter_++); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; always consumes exactly two draws so the counter advance is
  // input-independent.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // Index drawn proportionally to probs (assumed normalized; the tail bucket
  // absorbs rounding).
  int categorical(std::span<const double> probs) {
    const double u = uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) {
        return static_cast<int>(i);
      }
    }
    return static_cast<int>(probs.size()) - 1;
  }

  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

 private:
  static std::uint64_t mix(std::uint64_t key, std::uint64_t ctr) {
    // splitmix64 finalizer over key + golden-ratio-spaced counter.
    std::uint64_t z = key + ctr * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_{0};
};

}  // namespace rmbl

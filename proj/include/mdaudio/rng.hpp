#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mdaudio {

// Stateless 64-bit mixer (splitmix64 finalizer). Used to spread seed material
// before it enters an engine.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Sub-stream seed for (master seed, utterance id, epoch). The same triple
// always yields the same stream regardless of worker count or scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view id,
                                 std::uint64_t epoch) {
  return mix64(mix64(master) ^ fnv1a64(id)) ^ mix64(epoch + 0x51ed2701);
}

// Seeded generator with fixed-layout draw helpers. std distributions are not
// pinned across standard library implementations, so the value mappings live
// here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform index in [0, n). n must be nonzero.
  std::size_t uniform_index(std::size_t n) {
    std::size_t i = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  std::uint32_t uniform_int(std::uint32_t lo, std::uint32_t hi) {
    return lo + static_cast<std::uint32_t>(uniform_index(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mdaudio

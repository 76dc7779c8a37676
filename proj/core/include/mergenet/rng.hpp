#ifndef MERGENET_RNG_HPP
#define MERGENET_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace mergenet {

/*
 * Portable seeded random source.
 *
 * The engine is std::mt19937_64, whose output sequence is fixed by the C++
 * standard. The distributions are spelled out here instead of using the
 * <random> distributions, whose algorithms are implementation-defined:
 *   uniform()      (x >> 11) * 2^-53, in [0, 1)
 *   normal()       Box-Muller on two uniforms, u1 mapped to (0, 1]; one
 *                  value per call, the second is discarded
 *   index(n)       masked rejection sampling, unbiased
 *   shuffle(v)     Fisher-Yates from the back, swapping v[i] with v[index(i+1)]
 * Streams derived with derive(seed, tag) are seeded with splitmix64(seed ^
 * splitmix64(tag)).
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng derive(std::uint64_t seed, std::uint64_t tag);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Stable string hash used to derive per-slot and per-component seeds.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string_view s);

}  // namespace mergenet

#endif  // MERGENET_RNG_HPP

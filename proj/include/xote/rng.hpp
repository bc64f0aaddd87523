#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace xote {

// The single random source of the project: a 64-bit Mersenne Twister
// (std::mt19937_64, whose output sequence is fixed by the C++ standard).
// Derived quantities (uniform reals, bounded integers, normals, shuffles) are
// computed here rather than through <random> distributions, whose algorithms
// vary between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller; no cached second value, so the stream
  // position depends only on the number of calls.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Seed for an independent sub-stream, e.g. derive_seed(run_seed, kInitStream).
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace xote

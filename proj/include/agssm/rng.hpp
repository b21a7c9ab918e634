#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace agssm {

// Deterministic random stream. mt19937_64 output is pinned by the standard,
// but std::*_distribution is not, so the transforms live here. State
// round-trips through text so training can resume bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1), 53-bit resolution.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; two draws per value, no cached state.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // [0, n), rejection-sampled so every index is equally likely.
  std::uint64_t uniform_index(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = (std::size_t)uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string save_state() const;
  void load_state(const std::string& text);

  // Deterministic child seed for independent substreams.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace agssm

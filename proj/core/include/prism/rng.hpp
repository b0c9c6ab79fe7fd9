#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace prism {

// Splittable deterministic PRNG (splitmix64 core). Every random quantity in
// the repository flows from one root seed through named splits, e.g.
// root.split("cohort").split(patient_index). A child's identity depends only
// on the parent's seed and the label, never on how many values the parent has
// already drawn, so stages can be reordered or parallelized without changing
// their streams.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed);

  std::uint64_t next_u64();
  std::uint64_t uniform_index(std::uint64_t n);  // [0, n), n >= 1

  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  bool bernoulli(double p);
  double normal();  // standard normal, Box-Muller (two uniforms per draw)
  double normal(double mean, double sd);
  double exponential();  // rate 1
  double weibull(double shape, double scale);

  SplitRng split(std::string_view label) const;
  SplitRng split(std::uint64_t index) const;

  std::uint64_t seed() const { return seed_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t seed_;   // identity, fixed at construction
  std::uint64_t state_;  // stream position, advances on draws
};

// FNV-1a 64-bit, used for rng split labels and file content hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t basis = 14695981039346656037ull);

}  // namespace prism

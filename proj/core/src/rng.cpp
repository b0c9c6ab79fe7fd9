#include "prism/rng.hpp"

#include <cmath>
#include <numbers>

#include "prism/errors.hpp"

namespace prism {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

SplitRng::SplitRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

std::uint64_t SplitRng::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

std::uint64_t SplitRng::uniform_index(std::uint64_t n) {
  if (n == 0) throw NumericError("uniform_index: n must be >= 1");
  return next_u64() % n;
}

double SplitRng::uniform() {
  // 53 random bits -> [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SplitRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

bool SplitRng::bernoulli(double p) { return uniform() < p; }

double SplitRng::normal() {
  // Box-Muller without caching: deterministic draw count (2 per value).
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double SplitRng::normal(double mean, double sd) { return mean + sd * normal(); }

double SplitRng::exponential() { return -std::log(1.0 - uniform()); }

double SplitRng::weibull(double shape, double scale) {
  return scale * std::pow(exponential(), 1.0 / shape);
}

SplitRng SplitRng::split(std::string_view label) const {
  return split(fnv1a64(label));
}

SplitRng SplitRng::split(std::uint64_t index) const {
  // hash_combine-style mix of parent identity and child label.
  std::uint64_t h = seed_ ^ (index + kGolden + (seed_ << 6) + (seed_ >> 2));
  return SplitRng(mix64(h));
}

std::uint64_t fnv1a64(std::string_view bytes) {
  return fnv1a64(bytes.data(), bytes.size());
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t basis) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = basis;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace prism

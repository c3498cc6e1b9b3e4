#pragma once

#include <cstdint>
#include <initializer_list>

#include "matchopt/numeric.hpp"

namespace matchopt {

namespace detail {

inline constexpr std::uint64_t splitmix_gamma = 0x9e3779b97f4a7c15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based SplitMix64 stream. The k-th value (k = 0, 1, ...) of the
// stream with a given seed is mix64(seed + (k + 1) * 0x9e3779b97f4a7c15);
// draws are a pure function of (seed, counter), so streams are
// reproducible and cheap to fork.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() {
    return detail::mix64(seed_ + (++counter_) * detail::splitmix_gamma);
  }

  std::uint64_t at(std::uint64_t counter) const {
    return detail::mix64(seed_ + (counter + 1) * detail::splitmix_gamma);
  }

  // Uniform on the open interval (0, 1): 2^53 equispaced values offset by
  // half a step, so quantile transforms never see 0 or 1.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_normal() { return normal_quantile(next_uniform()); }

  double next_beta(double a, double b) { return beta_quantile(next_uniform(), a, b); }

  bool next_bernoulli(double q) { return next_uniform() < q; }

  std::uint64_t counter() const { return counter_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Child seed for a stage of a larger experiment: fold each part into the
// base seed with h <- mix64(h + mix64(part)). Stages that differ in any
// part get statistically independent streams.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = detail::mix64(base + detail::splitmix_gamma);
  for (std::uint64_t p : parts) h = detail::mix64(h + detail::mix64(p));
  return h;
}

}  // namespace matchopt

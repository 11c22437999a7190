#include "scribe/rng.hpp"

#include <cmath>

namespace scribe {

real Rng::normal() {
  // u1 in (0, 1] so the log is finite
  real u1 = static_cast<real>((next_u64() >> 11) + 1) * 0x1.0p-53;
  real u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::fill_normal(Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal();
}

void Rng::fill_uniform(Tensor& t, real lo, real hi) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace scribe

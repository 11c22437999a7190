#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "scribe/tensor.hpp"

namespace scribe {

// Deterministic random stream. Every sample is derived from raw engine
// draws with fixed arithmetic (no cached state in distributions), so the
// stream position is fully described by (seed, draw count) and can be
// restored exactly from a checkpoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_(seed) {}

  static Rng restore(std::uint64_t seed, std::uint64_t count) {
    Rng r(seed);
    r.eng_.discard(count);
    r.count_ = count;
    return r;
  }

  std::uint64_t next_u64() {
    ++count_;
    return eng_();
  }

  // uniform in [0, 1)
  real uniform() { return static_cast<real>(next_u64() >> 11) * 0x1.0p-53; }

  real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // standard normal via Box-Muller; the spare value is discarded so the
  // draw count alone determines the stream state
  real normal();

  void fill_normal(Tensor& t);
  void fill_uniform(Tensor& t, real lo, real hi);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t count() const { return count_; }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_;
  std::uint64_t count_ = 0;
};

// Stable seed mixing for derived streams (per-epoch shuffles, per-image
// synthesis streams).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace scribe

#pragma once

#include <cstdint>
#include <vector>

#include "driftbench/errors.hpp"

namespace driftbench {

// Counter-based deterministic generator. Draw i of a stream with key k is
// mix64(k + (i+1) * PHI), where mix64 is the splitmix64 finalizer. Identical
// seeds give identical sequences; child streams derived via split(tag) have
// keys decorrelated from the parent and from siblings with other tags, and
// deriving a child does not consume parent state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : key_(mix64(seed ^ kSeedTweak)) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kPhi); }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform_real(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform in [0, n), unbiased via rejection.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw SpecError("uniform_int: empty range");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Child stream keyed by tag; deterministic, parent state untouched.
  RngStream split(std::uint64_t tag) const {
    return RngStream(from_key_tag{}, mix64(key_ ^ mix64(tag + kSplitTweak)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const { return key_; }

 private:
  struct from_key_tag {};
  RngStream(from_key_tag, std::uint64_t key) : key_(key) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t kPhi = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kSeedTweak = 0xD6E8FEB86659FD93ull;
  static constexpr std::uint64_t kSplitTweak = 0xA0761D6478BD642Full;

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace driftbench

// Counter-based splittable pseudo-random generator. A single 64-bit master
// seed is forked by tag into independent streams, so baselines and the main
// fit can share initialization exactly and every run is reproducible from
// one number.

#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>

namespace hemppcat {

namespace detail {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace detail

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(seed), counter_(0) {}

  // Output i of stream `key` is mix(key + (i+1)*golden); the counter never
  // feeds back into the key, so forked streams are order-independent.
  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  // Child stream derived from the parent key and a tag; does not consume
  // from or advance this stream.
  Rng fork(std::uint64_t tag) const {
    return Rng(detail::mix64(key_ ^ detail::mix64(tag * detail::kGolden + 0x1F123BB5159A55E5ULL)));
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes exactly two words per draw.
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n) {
    const auto wide =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    return static_cast<int>(wide >> 64);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace hemppcat

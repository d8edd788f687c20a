#ifndef SLRVB_RNG_HPP
#define SLRVB_RNG_HPP

#include <cstdint>
#include <random>

namespace slrvb {

/// Seeded random stream. Copying an Rng copies its full state, including the
/// cached half of the normal generator, so copies produce identical draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : engine_(mix(mix(seed) ^ (stream * 0xD6E8FEB86659FD93ULL + 0x632BE59BD9B4E019ULL))) {}

  double normal() { return normal_(engine_); }

  /// Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t next_seed() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

  friend bool operator==(const Rng& a, const Rng& b) {
    return a.engine_ == b.engine_ && a.normal_ == b.normal_;
  }

 private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace slrvb

#endif  // SLRVB_RNG_HPP

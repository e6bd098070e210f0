#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace bnf {

/// splitmix64 step; used for seeding and for deriving child streams.
std::uint64_t splitmix64(std::uint64_t& state);

/// xoshiro256** with Box-Muller normals. Owned and seedable so that every
/// run is reproducible regardless of the standard library in use.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream keyed by (seed, stream).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next();
  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  /// Uniform on [0,1) with 53 random bits.
  double uniform();
  /// Uniform on the open interval (0,1).
  double uniform_open();
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bnf

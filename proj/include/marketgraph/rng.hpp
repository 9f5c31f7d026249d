#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace marketgraph {

/// Seeded, splittable random source.
///
/// Distributions are implemented here rather than through <random> adaptors
/// so a seed yields the same stream with every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Independent child stream derived from this stream's seed and a tag.
  /// Does not advance the parent.
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace marketgraph

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hipsgen {

// Source of randomness used by the samplers. The default helpers are built
// on next_u64(); tests override them to script exact picks.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual std::uint64_t next_u64() = 0;
  // Uniform integer in [0, n). n must be > 0.
  virtual std::size_t uniform_index(std::size_t n);
  // Uniform double in [0, 1) with 53 random bits.
  virtual double uniform01();

  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal(double mean, double stddev);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }
};

// xoshiro256** seeded through splitmix64. The stream depends only on the
// 64-bit seed, so runs are reproducible across platforms.
class SeededRng final : public RandomSource {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64() override;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

// Seed for task `index` of a run seeded with `run_seed`.
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t index);

}  // namespace hipsgen

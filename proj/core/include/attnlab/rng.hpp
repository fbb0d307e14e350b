#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

#include "attnlab/matrix.hpp"

namespace attnlab {

// mt19937_64 engine with hand-written distributions: the standard library
// distributions are implementation-defined, the engine is not.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Independent stream derived from the construction seed only, so the
  // result does not depend on how many draws were made before.
  SeededRng split(std::string_view stream) const;
  SeededRng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev);
  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace attnlab

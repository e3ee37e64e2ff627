#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "twnn/tensor.hpp"

namespace twnn {

/// SplitMix64 stream. All derived samples are computed with integer and
/// IEEE-754 arithmetic only, so a seed yields the same sequence everywhere
/// (std:: distributions are implementation-defined and are not used).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Independent child stream; advances this stream by one draw.
  Rng split() noexcept;

  Tensor uniform_tensor(Shape shape, double lo, double hi);
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t state_;
};

}  // namespace twnn

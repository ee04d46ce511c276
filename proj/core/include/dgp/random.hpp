#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "dgp/tensor.hpp"

namespace dgp {

/// Counter-based random stream: draw k is a pure function of (key, k), so a
/// stream's position is fully described by its counter.
class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  /// Independent named stream derived from a user seed.
  static RandomStream derive(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();
  /// Uniform on (0, 1].
  double uniform();
  double normal();
  /// Uniform on {0, ..., n-1}; n must be positive.
  std::size_t uniform_index(std::size_t n);
  Tensor normal_tensor(const Shape& shape);
  void shuffle(std::span<std::size_t> values);

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const RandomStream&, const RandomStream&) = default;

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace dgp

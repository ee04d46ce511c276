#include "dgp/random.hpp"

#include <cmath>
#include <numbers>

#include "dgp/errors.hpp"

namespace dgp {
namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RandomStream RandomStream::derive(std::uint64_t seed, std::string_view name) {
  return RandomStream(mix64(mix64(seed) ^ fnv1a(name)));
}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
}

double RandomStream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double RandomStream::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t RandomStream::uniform_index(std::size_t n) {
  if (n == 0) throw Error("uniform_index over an empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % bound);
}

Tensor RandomStream::normal_tensor(const Shape& shape) {
  Tensor t(shape);
  for (auto& v : t.data()) v = normal();
  return t;
}

void RandomStream::shuffle(std::span<std::size_t> values) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[uniform_index(i)]);
  }
}

}  // namespace dgp

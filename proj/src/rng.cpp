// SPDX-License-Identifier: Apache-2.0
#include "vittle/rng.hpp"

#include <cmath>
#include <numbers>

namespace vittle {

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t RngStream::next_u64() noexcept {
  const std::uint64_t key = mix64(seed_);
  return mix64(key ^ mix64(counter_++ + 0x632BE59BD9B4E019ULL));
}

double RngStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t n) noexcept {
  const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

double RngStream::normal() noexcept {
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::gamma(double shape) noexcept {
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale.
    const double g = gamma(shape + 1.0);
    const double u = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    return g * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

RngStream RngStream::split(std::string_view label) const noexcept {
  return RngStream(mix64(seed_ ^ mix64(fnv1a64(label))), 0);
}

RngStream RngStream::split(std::uint64_t index) const noexcept {
  return RngStream(mix64(mix64(seed_) + mix64(index ^ 0xD1B54A32D192ED03ULL)), 0);
}

Tensor gaussian_sample(RngStream& stream, const Shape& shape) {
  Tensor t(shape);
  for (auto& v : t.data()) v = stream.normal();
  return t;
}

}  // namespace vittle

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

#include "vittle/tensor.hpp"

namespace vittle {

/// Counter-based random stream. Draw i of a stream is a pure function of
/// (seed, i), so a stream can be replayed from any counter position and the
/// sequence does not depend on the platform's standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t c) noexcept { counter_ = c; }

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1).
  double uniform() noexcept;
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller; consumes two counters.
  double normal() noexcept;
  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape) noexcept;

  /// Independent child stream keyed by a label ("data", "init", ...).
  RngStream split(std::string_view label) const noexcept;
  /// Independent child stream keyed by an index (step, sample, instance).
  RngStream split(std::uint64_t index) const noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view s) noexcept;

/// I.i.d. standard normal tensor drawn from `stream`.
Tensor gaussian_sample(RngStream& stream, const Shape& shape);

}  // namespace vittle

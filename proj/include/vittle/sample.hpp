// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace vittle {

inline constexpr std::size_t kNoPosition = std::numeric_limits<std::size_t>::max();

enum SampleFlags : std::uint32_t {
  kFlagNone = 0,
  // A perturbation touched an answer-determining position (severity 3 only).
  kFlagKeyTouched = 1u << 0,
};

/// One multimodal query: visual tokens precede instruction tokens, followed by
/// the response during teacher forcing.
struct QuerySample {
  std::vector<std::size_t> visual;
  std::vector<std::size_t> text;
  std::vector<std::size_t> response;

  // Additive Gaussian noise on visual embeddings, regenerated from the seed
  // at embedding time; bit i of the mask selects visual position i.
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  std::uint32_t noise_mask = 0;

  // Answer-determining positions (the visual key and the copied text span).
  std::size_t key_visual = kNoPosition;
  std::size_t key_text_begin = kNoPosition;
  std::size_t key_text_end = kNoPosition;

  std::uint32_t flags = kFlagNone;

  friend bool operator==(const QuerySample&, const QuerySample&) = default;
};

}  // namespace vittle

// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace vittle {

/// Raises glibc's mmap and trim thresholds so the per-step tensor churn is
/// served from the heap instead of fresh mappings. No-op elsewhere; call once
/// before the first allocation-heavy work.
void tune_allocator() noexcept;

}  // namespace vittle

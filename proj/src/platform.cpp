// SPDX-License-Identifier: Apache-2.0
#include "vittle/platform.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace vittle {

void tune_allocator() noexcept {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace vittle

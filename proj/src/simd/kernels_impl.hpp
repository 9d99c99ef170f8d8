#pragma once

#include "imgsearch/simd/kernels.hpp"

namespace imgsearch::simd::detail {

extern const KernelTable scalar_table;
#if defined(IMGSEARCH_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(IMGSEARCH_HAVE_NEON)
extern const KernelTable neon_table;
#endif

}  // namespace imgsearch::simd::detail

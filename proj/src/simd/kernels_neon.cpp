#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace imgsearch::simd::detail {
namespace {

float dot_neon(const float* a, const float* b, std::size_t n) {
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
        acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    float sum = vaddvq_f32(vaddq_f32(acc0, acc1));
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

float sum_squares_neon(const float* a, std::size_t n) { return dot_neon(a, a, n); }

void scale_neon(float* a, std::size_t n, float factor) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(a + i, vmulq_n_f32(vld1q_f32(a + i), factor));
    for (; i < n; ++i) a[i] *= factor;
}

void dot_many_neon(const float* query, const float* rows, std::size_t n_rows, std::size_t dim,
                   float* out) {
    for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot_neon(query, rows + r * dim, dim);
}

}  // namespace

const KernelTable neon_table{Isa::Neon, dot_neon, sum_squares_neon, scale_neon, dot_many_neon};

}  // namespace imgsearch::simd::detail

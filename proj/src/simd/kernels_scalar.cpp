#include "kernels_impl.hpp"

namespace imgsearch::simd::detail {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
    float sum = 0.0f;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

float sum_squares_scalar(const float* a, std::size_t n) {
    float sum = 0.0f;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * a[i];
    return sum;
}

void scale_scalar(float* a, std::size_t n, float factor) {
    for (std::size_t i = 0; i < n; ++i) a[i] *= factor;
}

void dot_many_scalar(const float* query, const float* rows, std::size_t n_rows,
                     std::size_t dim, float* out) {
    for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot_scalar(query, rows + r * dim, dim);
}

}  // namespace

const KernelTable scalar_table{Isa::Scalar, dot_scalar, sum_squares_scalar, scale_scalar,
                               dot_many_scalar};

}  // namespace imgsearch::simd::detail

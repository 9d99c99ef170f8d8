#pragma once

// Dense float32 kernels used by the vector index and embedding store.
//
// Every kernel has a scalar reference implementation plus ISA-specific
// variants (AVX2+FMA on x86-64, NEON on AArch64). The variant is selected once
// at startup from CPU capabilities; IMGSEARCH_SIMD=scalar|avx2|neon overrides
// the choice (unsupported requests fall back to scalar).

#include <cstddef>
#include <span>
#include <string_view>

namespace imgsearch::simd {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
    Isa isa;
    float (*dot)(const float* a, const float* b, std::size_t n);
    float (*sum_squares)(const float* a, std::size_t n);
    void (*scale)(float* a, std::size_t n, float factor);
    /// out[r] = dot(query, rows + r*dim) for r in [0, n_rows).
    void (*dot_many)(const float* query, const float* rows, std::size_t n_rows,
                     std::size_t dim, float* out);
};

bool isa_supported(Isa isa) noexcept;
std::string_view isa_name(Isa isa) noexcept;

/// Kernel table for a specific ISA. Precondition: isa_supported(isa).
const KernelTable& kernels_for(Isa isa);

/// The table chosen for this process.
const KernelTable& active() noexcept;

inline float dot(std::span<const float> a, std::span<const float> b) noexcept {
    return active().dot(a.data(), b.data(), a.size());
}

inline float sum_squares(std::span<const float> a) noexcept {
    return active().sum_squares(a.data(), a.size());
}

inline void scale(std::span<float> a, float factor) noexcept {
    active().scale(a.data(), a.size(), factor);
}

}  // namespace imgsearch::simd

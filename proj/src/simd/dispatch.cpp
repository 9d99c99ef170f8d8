#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace imgsearch::simd {

bool isa_supported(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar:
            return true;
        case Isa::Avx2:
#if defined(IMGSEARCH_HAVE_AVX2)
            __builtin_cpu_init();
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::Neon:
#if defined(IMGSEARCH_HAVE_NEON)
            return true;  // mandatory on AArch64
#else
            return false;
#endif
    }
    return false;
}

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
        case Isa::Neon: return "neon";
    }
    return "unknown";
}

const KernelTable& kernels_for(Isa isa) {
    if (!isa_supported(isa)) {
        throw std::invalid_argument("SIMD variant not supported on this CPU: " +
                                    std::string(isa_name(isa)));
    }
    switch (isa) {
#if defined(IMGSEARCH_HAVE_AVX2)
        case Isa::Avx2: return detail::avx2_table;
#endif
#if defined(IMGSEARCH_HAVE_NEON)
        case Isa::Neon: return detail::neon_table;
#endif
        default: return detail::scalar_table;
    }
}

namespace {

const KernelTable& select() noexcept {
    if (const char* forced = std::getenv("IMGSEARCH_SIMD")) {
        const std::string_view want(forced);
        for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
            if (want == isa_name(isa)) {
                return isa_supported(isa) ? kernels_for(isa) : detail::scalar_table;
            }
        }
    }
    for (Isa isa : {Isa::Avx2, Isa::Neon}) {
        if (isa_supported(isa)) return kernels_for(isa);
    }
    return detail::scalar_table;
}

}  // namespace

const KernelTable& active() noexcept {
    static const KernelTable& table = select();
    return table;
}

}  // namespace imgsearch::simd

#include "fedbench/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace fedbench::kernels {

#ifdef FEDBENCH_HAVE_AVX2
const Ops* avx2_ops_impl();
#endif

const Ops* avx2_ops() {
#ifdef FEDBENCH_HAVE_AVX2
    if (__builtin_cpu_supports("avx2")) return avx2_ops_impl();
#endif
    return nullptr;
}

namespace {

const Ops* select() {
    const char* forced = std::getenv("FEDBENCH_KERNELS");
    if (forced != nullptr) {
        if (std::strcmp(forced, "scalar") == 0) return &scalar_ops();
        if (std::strcmp(forced, "avx2") == 0 && avx2_ops() != nullptr)
            return avx2_ops();
        // Unknown or unavailable request falls back to the default choice.
    }
    if (const Ops* v = avx2_ops()) return v;
    return &scalar_ops();
}

}  // namespace

const Ops& active() {
    static const Ops* selected = select();
    return *selected;
}

}  // namespace fedbench::kernels

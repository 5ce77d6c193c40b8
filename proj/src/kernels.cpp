#include "qase/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace qase::kernels {

const Ops& active() {
    static const Ops* selected = [] {
        const char* force = std::getenv("QASE_KERNELS");
        if (force && std::strcmp(force, "scalar") == 0) return &scalar_ops();
        if (avx2_available()) return &avx2_ops();
        return &scalar_ops();
    }();
    return *selected;
}

}  // namespace qase::kernels

#pragma once

#include <cstddef>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace detrade {

// Runs fn(i) for i in [0, n). threads <= 1 takes the plain serial loop, which
// doubles as the reference path for the parallel kernels: every call site is
// written so that iteration i touches only its own output slot, so the two
// paths must produce identical bits. Reductions are kept out of this helper
// and done serially by callers.
template <typename Fn>
void parallel_for(std::ptrdiff_t n, int threads, Fn&& fn) {
    if (threads <= 1) {
        for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
        return;
    }
#if defined(_OPENMP)
#pragma omp parallel for schedule(static) num_threads(threads)
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#else
    for (std::ptrdiff_t i = 0; i < n; ++i) fn(i);
#endif
}

inline int hardware_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace detrade

#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bharnet {

// Static split of [0, n); each index is handled by exactly one thread with a
// fixed sequential reduction order inside fn, so results are bit-identical
// for any thread count. Use for loops whose bodies are heavy (per-sample or
// per-channel kernel work).
template <class F>
void parallel_for(int64_t n, F&& fn) {
#ifdef _OPENMP
    if (n >= 2) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#endif
    for (int64_t i = 0; i < n; ++i) fn(i);
}

// Elementwise map; only parallelizes when the array is large enough to pay
// for thread startup.
template <class F>
void parallel_map(int64_t n, F&& fn) {
#ifdef _OPENMP
    if (n >= 65536) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#endif
    for (int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace bharnet

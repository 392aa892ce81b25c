#pragma once

// Deterministic trial fan-out. Trials are independent given per-trial derived
// seeds; each writes only its own slot, so the merged result is identical for
// the serial path (threads == 1) and any OpenMP schedule.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#ifdef UWM_HAS_OPENMP
#include <omp.h>
#endif

namespace uwm::par {

inline int max_threads() {
#ifdef UWM_HAS_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Runs fn(0..n-1); threads == 1 forces the serial reference path, 0 uses the
/// OpenMP default. The first exception thrown by any trial is rethrown after
/// the loop joins.
template <typename Fn>
void for_each_index(std::size_t n, Fn&& fn, int threads = 0) {
#ifdef UWM_HAS_OPENMP
  if (threads != 1 && n > 1) {
    std::string error;
    bool failed = false;
    const int want = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(want)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
      if (failed) continue;
      try {
        fn(static_cast<std::size_t>(i));
      } catch (const std::exception& e) {
#pragma omp critical
        {
          if (!failed) {
            failed = true;
            error = e.what();
          }
        }
      }
    }
    if (failed) throw std::runtime_error(error);
    return;
  }
#else
  (void)threads;
#endif
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace uwm::par

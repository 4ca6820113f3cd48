#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace fedsynth {

// Worker count for client-level and seed-level parallel loops. Defaults to
// FEDSYNTH_THREADS when set, otherwise the OpenMP maximum.
std::size_t worker_count();
void set_worker_count(std::size_t n);  // 0 restores the default

// Raises glibc's mmap and trim thresholds so the many short-lived
// parameter-sized temporaries are recycled instead of mapped and unmapped
// on every step. No effect on other C libraries.
void tune_allocator();

// Runs body(i) for i in [0, n). With one worker this is a plain loop, kept
// as the serial reference the parallel path is tested against. Bodies must
// write only to their own output slot; every exception is rethrown after
// the loop (lowest index first).
template <class Body>
void parallel_for(std::size_t n, Body&& body, std::size_t workers = worker_count()) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(static_cast<int>(workers))
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fedsynth

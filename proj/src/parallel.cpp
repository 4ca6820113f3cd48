#include "fedsynth/parallel.hpp"

#include "fedsynth/log.hpp"

#include <omp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace fedsynth {
namespace {
std::atomic<std::size_t> g_override{0};
std::atomic<int> g_level{static_cast<int>(log::Level::warn)};
std::mutex g_log_mutex;
}  // namespace

std::size_t worker_count() {
  if (auto n = g_override.load(); n > 0) return n;
  if (const char* env = std::getenv("FEDSYNTH_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return static_cast<std::size_t>(omp_get_max_threads());
}

void set_worker_count(std::size_t n) { g_override = n; }

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 4 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

namespace log {

void set_level(Level level) { g_level = static_cast<int>(level); }
Level level() { return static_cast<Level>(g_level.load()); }

void warn(std::string_view message) {
  if (g_level.load() < static_cast<int>(Level::warn)) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "[fedsynth] warning: " << message << '\n';
}

void info(std::string_view message) {
  if (g_level.load() < static_cast<int>(Level::info)) return;
  std::lock_guard lock(g_log_mutex);
  std::cerr << "[fedsynth] " << message << '\n';
}

}  // namespace log
}  // namespace fedsynth

#include "alloc_counter.hpp"

#include <algorithm>
#include <atomic>
#include <malloc.h>

// glibc's real allocator entry points.
extern "C" {
void* __libc_malloc(std::size_t);
void* __libc_calloc(std::size_t, std::size_t);
void* __libc_realloc(void*, std::size_t);
void* __libc_memalign(std::size_t, std::size_t);
void __libc_free(void*);
}

namespace {

std::atomic<bool> active{false};
std::atomic<std::size_t> large_threshold{0};
std::atomic<long long> live{0}, peak{0}, live_large{0}, peak_large{0}, large_count{0}, calls{0};

void raise_to(std::atomic<long long>& target, long long value) {
  long long seen = target.load(std::memory_order_relaxed);
  while (value > seen && !target.compare_exchange_weak(seen, value, std::memory_order_relaxed)) {
  }
}

void note_alloc(void* p) {
  if (!p || !active.load(std::memory_order_relaxed)) return;
  const auto size = static_cast<long long>(malloc_usable_size(p));
  calls.fetch_add(1, std::memory_order_relaxed);
  raise_to(peak, live.fetch_add(size, std::memory_order_relaxed) + size);
  if (static_cast<std::size_t>(size) >= large_threshold.load(std::memory_order_relaxed)) {
    large_count.fetch_add(1, std::memory_order_relaxed);
    raise_to(peak_large, live_large.fetch_add(1, std::memory_order_relaxed) + 1);
  }
}

void note_free(void* p) {
  if (!p || !active.load(std::memory_order_relaxed)) return;
  const auto size = static_cast<long long>(malloc_usable_size(p));
  live.fetch_sub(size, std::memory_order_relaxed);
  if (static_cast<std::size_t>(size) >= large_threshold.load(std::memory_order_relaxed)) {
    live_large.fetch_sub(1, std::memory_order_relaxed);
  }
}

}  // namespace

extern "C" {

void* malloc(std::size_t n) {
  void* p = __libc_malloc(n);
  note_alloc(p);
  return p;
}

void* calloc(std::size_t n, std::size_t size) {
  void* p = __libc_calloc(n, size);
  note_alloc(p);
  return p;
}

void* realloc(void* old, std::size_t n) {
  note_free(old);
  void* p = __libc_realloc(old, n);
  note_alloc(p ? p : (n ? old : nullptr));  // a failed realloc keeps the old block
  return p;
}

void free(void* p) {
  note_free(p);
  __libc_free(p);
}

void* memalign(std::size_t align, std::size_t n) {
  void* p = __libc_memalign(align, n);
  note_alloc(p);
  return p;
}

void* aligned_alloc(std::size_t align, std::size_t n) { return memalign(align, n); }

int posix_memalign(void** out, std::size_t align, std::size_t n) {
  void* p = memalign(align, n);
  if (!p) return 12;  // ENOMEM
  *out = p;
  return 0;
}

}  // extern "C"

namespace gramdyn::testing {

void alloc_window_begin(std::size_t large) {
  large_threshold = large;
  live = peak = live_large = peak_large = large_count = calls = 0;
  active = true;
}

AllocWindow alloc_window_end() {
  active = false;
  return {peak.load(), peak_large.load(), large_count.load(), calls.load()};
}

}  // namespace gramdyn::testing

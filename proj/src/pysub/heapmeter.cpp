// Per-thread live heap accounting. Lets an interpreter running on a shared
// arena thread enforce its own memory ceiling.

#include <malloc.h>

#include <cstdlib>
#include <new>

#include "ast.hpp"

namespace {
thread_local std::int64_t t_live_bytes = 0;
}

void* operator new(std::size_t n) {
  void* p = std::malloc(n ? n : 1);
  if (!p) throw std::bad_alloc();
  t_live_bytes += static_cast<std::int64_t>(malloc_usable_size(p));
  return p;
}

void operator delete(void* p) noexcept {
  if (!p) return;
  t_live_bytes -= static_cast<std::int64_t>(malloc_usable_size(p));
  std::free(p);
}

void operator delete(void* p, std::size_t) noexcept { operator delete(p); }

namespace nv::pysub {

std::int64_t live_heap_bytes() { return t_live_bytes; }

}  // namespace nv::pysub

#include <cstdlib>
#include <thread>

#include "ovfree/concurrency.hpp"

namespace ovfree {

unsigned thread_count() {
  if (const char* env = std::getenv("OVFREE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace ovfree

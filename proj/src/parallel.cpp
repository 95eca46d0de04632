#include "dncit/parallel.hpp"

#include <cstdlib>
#include <string>

namespace dncit {

unsigned default_thread_count() {
  if (const char* env = std::getenv("DNCIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

}  // namespace dncit

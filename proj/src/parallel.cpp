#include "fit/parallel.hpp"

#include <cstdlib>
#include <string>

namespace fit {

std::size_t worker_threads() {
  if (const char* env = std::getenv("FIT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace fit

#include "bilayer/parallel.hpp"

#include <cstdlib>
#include <string>

namespace bsq {

int worker_count() {
  if (const char* env = std::getenv("BILAYER_SQUEEZE_THREADS"); env != nullptr && *env != '\0') {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
      // fall through to the hardware default
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace bsq

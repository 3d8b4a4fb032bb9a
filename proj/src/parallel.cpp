#include "mecal/parallel.hpp"

#include <cstdlib>
#include <string>

namespace mecal {

unsigned default_thread_count() {
  if (const char* env = std::getenv("MECAL_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return 1;
}

}  // namespace mecal

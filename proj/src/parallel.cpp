#include "pcs/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef PCS_HAVE_OPENMP
#include <omp.h>
#endif

namespace pcs {

int worker_threads() {
  if (const char* env = std::getenv("PC_LANDSCAPE_THREADS")) {
    try {
      std::size_t used = 0;
      const int n = std::stoi(env, &used);
      if (n > 0 && env[used] == '\0') return n;
    } catch (const std::exception&) {
      // fall through to the default
    }
  }
#ifdef PCS_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

bool openmp_enabled() {
#ifdef PCS_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace pcs

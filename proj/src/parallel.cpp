#include "nmqi/parallel.hpp"

#include <cstdlib>
#include <string>

#include "nmqi/errors.hpp"

#if NMQI_HAVE_OPENMP
#include <omp.h>
#endif

namespace nmqi {

void set_threads(int n) {
  if (n < 0) throw Error("thread count must be non-negative");
  if (n == 0) {
    if (const char* env = std::getenv("NMQI_THREADS"); env && *env) {
      try {
        n = std::stoi(env);
      } catch (const std::exception&) {
        throw Error(std::string("NMQI_THREADS is not an integer: ") + env);
      }
      if (n < 1) throw Error("NMQI_THREADS must be at least 1");
    }
  }
#if NMQI_HAVE_OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int threads() {
#if NMQI_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

bool have_openmp() {
#if NMQI_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

}  // namespace nmqi

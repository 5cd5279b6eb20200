#include "kwl/execution.hpp"

#include <omp.h>

namespace kwl {

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace kwl

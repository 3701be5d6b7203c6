#pragma once

#include <cstddef>
#include <exception>

namespace closp {

// OpenMP loop over [0, n) whose first exception is rethrown on the calling
// thread after the loop.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(closp_parallel_for)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace closp

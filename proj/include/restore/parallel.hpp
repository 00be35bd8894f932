#pragma once

#include <Eigen/Core>
#include <cstdlib>

namespace restore {

// Caps internal parallelism (Eigen's GEMM threads) from RESTORE_NUM_WORKERS.
inline void configure_workers() {
  if (const char* env = std::getenv("RESTORE_NUM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) Eigen::setNbThreads(n);
  }
}

}  // namespace restore

#pragma once

// Process-wide call counters. Tests use them to assert that hot paths never
// fall back to O(K^3) dense work or evaluate the Gaussian prior density.

#include <atomic>
#include <cstdint>

namespace msv::instrumentation {

struct Counters {
  std::atomic<std::int64_t> dense_factorizations{0};
  std::atomic<std::int64_t> dense_reconstructions{0};
  std::atomic<std::int64_t> prior_density_calls{0};
};

Counters& counters();

inline void count_dense_factorization() {
  counters().dense_factorizations.fetch_add(1, std::memory_order_relaxed);
}
inline void count_dense_reconstruction() {
  counters().dense_reconstructions.fetch_add(1, std::memory_order_relaxed);
}
inline void count_prior_density_call() {
  counters().prior_density_calls.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace msv::instrumentation

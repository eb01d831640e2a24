// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/common.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cstdio>

namespace rlpt {

namespace {
int g_threads = 1;
}

void set_threads(int n) {
  g_threads = std::max(1, n);
  omp_set_num_threads(g_threads);
  // GEMMs run single-threaded inside our own parallel regions.
  Eigen::setNbThreads(1);
}

int thread_count() { return g_threads; }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace rlpt

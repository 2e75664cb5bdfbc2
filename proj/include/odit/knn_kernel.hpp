#pragma once

#include <cstddef>

namespace odit::detail {

// Squared Euclidean distance accumulated in four interleaved lanes. Once the partial
// sum reaches `bound` the scan stops and the partial sum (>= bound) is returned; the
// exact value is only needed for candidates below the bound.
inline double squared_distance_bounded(const double* x, const double* r, std::size_t dim, double bound) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= dim; j += 4) {
    const double d0 = x[j] - r[j], d1 = x[j + 1] - r[j + 1], d2 = x[j + 2] - r[j + 2], d3 = x[j + 3] - r[j + 3];
    a0 += d0 * d0;
    a1 += d1 * d1;
    a2 += d2 * d2;
    a3 += d3 * d3;
    if ((j & 7) == 4) {
      const double partial = (a0 + a1) + (a2 + a3);
      if (partial >= bound) return partial;
    }
  }
  for (; j < dim; ++j) {
    const double dj = x[j] - r[j];
    a0 += dj * dj;
  }
  return (a0 + a1) + (a2 + a3);
}

// Same lanes over a subset of coordinates, visited in the order of `idx`.
inline double squared_distance_bounded(const double* x, const double* r, const std::size_t* idx, std::size_t n,
                                       double bound) {
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const double d0 = x[idx[j]] - r[idx[j]], d1 = x[idx[j + 1]] - r[idx[j + 1]];
    const double d2 = x[idx[j + 2]] - r[idx[j + 2]], d3 = x[idx[j + 3]] - r[idx[j + 3]];
    a0 += d0 * d0;
    a1 += d1 * d1;
    a2 += d2 * d2;
    a3 += d3 * d3;
    if ((j & 7) == 4) {
      const double partial = (a0 + a1) + (a2 + a3);
      if (partial >= bound) return partial;
    }
  }
  for (; j < n; ++j) {
    const double dj = x[idx[j]] - r[idx[j]];
    a0 += dj * dj;
  }
  return (a0 + a1) + (a2 + a3);
}

}  // namespace odit::detail

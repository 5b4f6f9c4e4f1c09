#include "bimmsbm/simd.hpp"

#include <limits>

namespace bimmsbm::simd::detail {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

double max_scalar(const double* a, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void rank1_scalar(double w, const double* x, std::size_t nx, const double* y,
                  std::size_t ny, double* out) {
  for (std::size_t i = 0; i < nx; ++i) {
    const double wx = w * x[i];
    double* row = out + i * ny;
    for (std::size_t j = 0; j < ny; ++j) row[j] += wx * y[j];
  }
}

}  // namespace

const KernelTable scalar_table{dot_scalar, sum_scalar,   max_scalar,
                               axpy_scalar, scale_scalar, rank1_scalar};

}  // namespace bimmsbm::simd::detail

#include "wmdd/kernels.hpp"

namespace wmdd::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

constexpr KernelTable kScalar{Isa::scalar, &dot_scalar, &axpy_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace wmdd::kernels

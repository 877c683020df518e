#pragma once

// Inner-loop arithmetic used by the dense and conv1d layers.
//
// Every routine has a scalar reference implementation. Vectorized variants
// (AVX2+FMA on x86-64, NEON on aarch64) are compiled when the toolchain
// supports them and selected once per process from the CPU's capabilities.
// The selection can be pinned with the WMDD_ISA environment variable
// ("scalar", "avx2", "neon") before the first kernel call.

#include <cstddef>
#include <span>
#include <string_view>

namespace wmdd::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Best available table, resolved on first use.
const KernelTable& active();

// Overrides the active table. Returns false if the ISA is unavailable.
// Only meant for tests and benchmarks; switching mid-run breaks bitwise
// reproducibility.
bool select(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace wmdd::kernels

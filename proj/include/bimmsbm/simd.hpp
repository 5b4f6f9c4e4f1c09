#pragma once
// Dense double-precision kernels used by the inner dyad loops.
//
// Every kernel has a scalar reference implementation. Vector variants
// (AVX2+FMA on x86-64, NEON on AArch64) are selected once at runtime from
// the CPU feature bits; BIMMSBM_SIMD=scalar|avx2|neon overrides the choice.
// Vector variants reassociate sums, so results agree with the scalar path to
// rounding, not bit-for-bit.

#include <cstddef>
#include <span>
#include <string_view>

namespace bimmsbm::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// ISA used by the dispatching entry points below.
Isa active_isa();

/// True if `isa` can run on this machine.
bool isa_supported(Isa isa);

/// Force a variant (tests, benchmarking). Throws if unsupported.
void set_isa(Isa isa);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  double (*max)(const double* a, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*scale)(double alpha, double* x, std::size_t n);
  // out[i*ny + j] += w * x[i] * y[j]
  void (*rank1)(double w, const double* x, std::size_t nx, const double* y,
                std::size_t ny, double* out);
};

const KernelTable& kernels(Isa isa);

// Dispatching wrappers over the active table.

double dot(std::span<const double> a, std::span<const double> b);
double sum(std::span<const double> a);
double max(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
void rank1_update(double w, std::span<const double> x, std::span<const double> y,
                  std::span<double> out);

namespace detail {
extern const KernelTable scalar_table;
#if defined(__x86_64__) || defined(_M_X64)
extern const KernelTable avx2_table;
#endif
#if defined(__aarch64__)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace bimmsbm::simd

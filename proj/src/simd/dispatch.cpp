#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "bimmsbm/simd.hpp"

namespace bimmsbm::simd {
namespace {

Isa detect() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
#if defined(__aarch64__)
  return Isa::neon;
#endif
  return Isa::scalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("BIMMSBM_SIMD")) {
    const std::string v(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
      if (v == isa_name(isa) && isa_supported(isa)) return isa;
  }
  return detect();
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{&kernels(initial_isa())};
  return table;
}

std::atomic<Isa>& active_tag() {
  static std::atomic<Isa> tag{initial_isa()};
  return tag;
}

const KernelTable& table() { return *active_table().load(std::memory_order_relaxed); }

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels(Isa isa) {
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2: return detail::avx2_table;
#endif
#if defined(__aarch64__)
    case Isa::neon: return detail::neon_table;
#endif
    default: return detail::scalar_table;
  }
}

Isa active_isa() { return active_tag().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa))
    throw std::invalid_argument("SIMD variant not supported on this CPU: " + std::string(isa_name(isa)));
  active_table().store(&kernels(isa), std::memory_order_relaxed);
  active_tag().store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return table().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

double sum(std::span<const double> a) { return table().sum(a.data(), a.size()); }

double max(std::span<const double> a) { return table().max(a.data(), a.size()); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  table().axpy(alpha, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}

void scale(double alpha, std::span<double> x) { table().scale(alpha, x.data(), x.size()); }

void rank1_update(double w, std::span<const double> x, std::span<const double> y,
                  std::span<double> out) {
  if (out.size() < x.size() * y.size())
    throw std::invalid_argument("rank1_update: output too small");
  table().rank1(w, x.data(), x.size(), y.data(), y.size(), out.data());
}

}  // namespace bimmsbm::simd

#pragma once

// Data-parallel inner loops of the estimator recursions. Each kernel has a
// scalar reference and (on x86-64) an AVX2 variant chosen at runtime. All
// variants evaluate the same operations in the same order without FMA, so
// their outputs are bit-identical; tests/test_simd_equivalence.cpp holds
// them to that.

#include <cstddef>
#include <string_view>
#include <vector>

namespace ciest::simd {

struct KernelTable {
  const char* name;

  /// y = (L (x) I_m) x for a symmetric n-by-n row-major L and a stacked x of
  /// n blocks of size m. y must not alias x.
  void (*kron_laplacian_apply)(const double* L, std::size_t n, std::size_t m,
                               const double* x, double* y);

  /// x[j] -= alpha * (weight * consensus[j] + innovation[j])
  void (*single_scale_update)(double* x, const double* consensus,
                              const double* innovation, double alpha,
                              double weight, std::size_t len);

  /// x[j] = (x[j] - beta * consensus[j]) - alpha * (x[j] - target[j])
  void (*mixed_scale_update)(double* x, const double* consensus,
                             const double* target, double alpha, double beta,
                             std::size_t len);

  /// out[j] = step * k where (k - 1/2) step <= y[j] + dither[j] < (k + 1/2) step.
  /// dither may be null (undithered). Returns max |k| over the batch, or NaN
  /// if any input was not finite.
  double (*quantize_lattice)(const double* y, const double* dither, double step,
                             double* out, std::size_t len);
};

namespace scalar {
extern const KernelTable table;
}
#ifdef CIEST_HAVE_AVX2
namespace avx2 {
extern const KernelTable table;
}
#endif

enum class Isa { automatic, scalar, avx2 };

/// The table in use. Chosen on first call from CPU features unless set.
const KernelTable& active();

/// Force a variant. Throws InvalidArgument if the CPU or build lacks it.
void select(Isa isa);

Isa parse_isa(std::string_view name);

/// Every variant usable on this machine, scalar first.
std::vector<const KernelTable*> available();

}  // namespace ciest::simd

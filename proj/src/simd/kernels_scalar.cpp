#include <cmath>
#include <limits>

#include "ciest/simd/kernels.hpp"

namespace ciest::simd::scalar {

namespace {

void kron_laplacian_apply(const double* L, std::size_t n, std::size_t m,
                          const double* x, double* y) {
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = L + r * n;
    for (std::size_t c = 0; c < m; ++c) {
      double acc = 0.0;
      for (std::size_t l = 0; l < n; ++l) acc += row[l] * x[l * m + c];
      y[r * m + c] = acc;
    }
  }
}

void single_scale_update(double* x, const double* consensus, const double* innovation,
                         double alpha, double weight, std::size_t len) {
  for (std::size_t j = 0; j < len; ++j)
    x[j] -= alpha * (weight * consensus[j] + innovation[j]);
}

void mixed_scale_update(double* x, const double* consensus, const double* target,
                        double alpha, double beta, std::size_t len) {
  for (std::size_t j = 0; j < len; ++j)
    x[j] = (x[j] - beta * consensus[j]) - alpha * (x[j] - target[j]);
}

double quantize_lattice(const double* y, const double* dither, double step, double* out,
                        std::size_t len) {
  double max_index = 0.0;
  bool finite = true;
  for (std::size_t j = 0; j < len; ++j) {
    const double w = dither ? y[j] + dither[j] : y[j];
    double k = std::floor(w / step + 0.5);
    // w / step rounds; repair the half-open cell membership exactly.
    if ((k - 0.5) * step > w)
      k -= 1.0;
    else if ((k + 0.5) * step <= w)
      k += 1.0;
    out[j] = k * step;
    finite = finite && std::isfinite(w);
    max_index = std::fmax(max_index, std::fabs(k));
  }
  return finite ? max_index : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

const KernelTable table{"scalar", kron_laplacian_apply, single_scale_update,
                        mixed_scale_update, quantize_lattice};

}  // namespace ciest::simd::scalar

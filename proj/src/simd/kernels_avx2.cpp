#include <immintrin.h>

#include <cmath>
#include <limits>

#include "ciest/simd/kernels.hpp"

namespace ciest::simd::avx2 {

namespace {

// Rows are processed four at a time. L is symmetric, so the four entries
// L[r..r+3][l] are read contiguously from row l.
void kron_laplacian_apply(const double* L, std::size_t n, std::size_t m,
                          const double* x, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= n; r += 4) {
    for (std::size_t c = 0; c < m; ++c) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t l = 0; l < n; ++l) {
        const __m256d col = _mm256_loadu_pd(L + l * n + r);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(col, _mm256_set1_pd(x[l * m + c])));
      }
      alignas(32) double lanes[4];
      _mm256_store_pd(lanes, acc);
      for (std::size_t k = 0; k < 4; ++k) y[(r + k) * m + c] = lanes[k];
    }
  }
  for (; r < n; ++r) {
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
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vw = _mm256_set1_pd(weight);
  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    const __m256d inner = _mm256_add_pd(_mm256_mul_pd(vw, _mm256_loadu_pd(consensus + j)),
                                        _mm256_loadu_pd(innovation + j));
    _mm256_storeu_pd(x + j, _mm256_sub_pd(_mm256_loadu_pd(x + j), _mm256_mul_pd(va, inner)));
  }
  for (; j < len; ++j) x[j] -= alpha * (weight * consensus[j] + innovation[j]);
}

void mixed_scale_update(double* x, const double* consensus, const double* target,
                        double alpha, double beta, std::size_t len) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    const __m256d xv = _mm256_loadu_pd(x + j);
    const __m256d pulled = _mm256_sub_pd(xv, _mm256_mul_pd(vb, _mm256_loadu_pd(consensus + j)));
    const __m256d innov = _mm256_mul_pd(va, _mm256_sub_pd(xv, _mm256_loadu_pd(target + j)));
    _mm256_storeu_pd(x + j, _mm256_sub_pd(pulled, innov));
  }
  for (; j < len; ++j) x[j] = (x[j] - beta * consensus[j]) - alpha * (x[j] - target[j]);
}

double quantize_lattice(const double* y, const double* dither, double step, double* out,
                        std::size_t len) {
  const __m256d vs = _mm256_set1_pd(step);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
  __m256d vmax = zero;
  __m256d finite = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    __m256d w = _mm256_loadu_pd(y + j);
    if (dither) w = _mm256_add_pd(w, _mm256_loadu_pd(dither + j));
    __m256d k = _mm256_floor_pd(_mm256_add_pd(_mm256_div_pd(w, vs), half));
    const __m256d low = _mm256_cmp_pd(_mm256_mul_pd(_mm256_sub_pd(k, half), vs), w, _CMP_GT_OQ);
    const __m256d high = _mm256_cmp_pd(_mm256_mul_pd(_mm256_add_pd(k, half), vs), w, _CMP_LE_OQ);
    k = _mm256_sub_pd(k, _mm256_and_pd(low, one));
    k = _mm256_add_pd(k, _mm256_and_pd(high, one));
    _mm256_storeu_pd(out + j, _mm256_mul_pd(k, vs));
    finite = _mm256_and_pd(finite, _mm256_cmp_pd(_mm256_sub_pd(w, w), zero, _CMP_EQ_OQ));
    // max_pd returns the second operand on NaN; the finite mask covers that case.
    vmax = _mm256_max_pd(_mm256_and_pd(k, abs_mask), vmax);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, vmax);
  double max_index = std::fmax(std::fmax(lanes[0], lanes[1]), std::fmax(lanes[2], lanes[3]));
  bool all_finite = _mm256_movemask_pd(finite) == 0xF;
  for (; j < len; ++j) {
    const double w = dither ? y[j] + dither[j] : y[j];
    double k = std::floor(w / step + 0.5);
    if ((k - 0.5) * step > w)
      k -= 1.0;
    else if ((k + 0.5) * step <= w)
      k += 1.0;
    out[j] = k * step;
    all_finite = all_finite && std::isfinite(w);
    max_index = std::fmax(max_index, std::fabs(k));
  }
  return all_finite ? max_index : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

const KernelTable table{"avx2", kron_laplacian_apply, single_scale_update,
                        mixed_scale_update, quantize_lattice};

}  // namespace ciest::simd::avx2

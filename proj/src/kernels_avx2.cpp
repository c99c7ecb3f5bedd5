// AVX2 backend. This translation unit is compiled with -mavx2 on x86 and must
// only be entered after a runtime cpu_has_avx2() check. Each intrinsic
// processes four independent output lanes with the same mul/add sequence as
// the scalar reference (no FMA), so results are bit-identical.

#include "htc/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

namespace htc::kernels {

namespace {

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    __m256d vx = _mm256_loadu_pd(x + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, vx));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void vadd_avx2(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_avx2(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_avx2(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vmac_avx2(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vo = _mm256_loadu_pd(out + i);
    vo = _mm256_add_pd(vo, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    _mm256_storeu_pd(out + i, vo);
  }
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void vscale_avx2(std::size_t n, double a, double* x) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  }
  for (; i < n; ++i) x[i] *= a;
}

void vrelu_avx2(std::size_t n, const double* a, double* out) {
  // maxpd(x, 0) matches the scalar (x > 0 ? x : 0) for -0.0 and NaN inputs.
  const __m256d vz = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(a + i), vz));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

const Backend kAvx2 = {
    "avx2",     axpy_avx2,   vadd_avx2, vsub_avx2,
    vmul_avx2,  vmac_avx2,   vscale_avx2, vrelu_avx2,
};

}  // namespace

const Backend* avx2_backend() { return &kAvx2; }

}  // namespace htc::kernels

#else  // !__AVX2__

namespace htc::kernels {
const Backend* avx2_backend() { return nullptr; }
}  // namespace htc::kernels

#endif

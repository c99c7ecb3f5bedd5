// NEON backend (AArch64 double-precision, two lanes per vector). Same
// bit-identical contract as the AVX2 backend: independent output lanes,
// per-element mul/add order matching the scalar reference.

#include "htc/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace htc::kernels {

namespace {

void axpy_neon(std::size_t n, double a, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t vy = vld1q_f64(y + i);
    vy = vaddq_f64(vy, vmulq_f64(va, vld1q_f64(x + i)));
    vst1q_f64(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void vadd_neon(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_neon(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_neon(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vmac_neon(std::size_t n, const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t vo = vld1q_f64(out + i);
    vo = vaddq_f64(vo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    vst1q_f64(out + i, vo);
  }
  for (; i < n; ++i) out[i] += a[i] * b[i];
}

void vscale_neon(std::size_t n, double a, double* x) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), va));
  }
  for (; i < n; ++i) x[i] *= a;
}

void vrelu_neon(std::size_t n, const double* a, double* out) {
  const float64x2_t vz = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmaxq_f64(vld1q_f64(a + i), vz));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

const Backend kNeon = {
    "neon",     axpy_neon,   vadd_neon, vsub_neon,
    vmul_neon,  vmac_neon,   vscale_neon, vrelu_neon,
};

}  // namespace

const Backend* neon_backend() { return &kNeon; }

}  // namespace htc::kernels

#else  // !__aarch64__

namespace htc::kernels {
const Backend* neon_backend() { return nullptr; }
}  // namespace htc::kernels

#endif

#pragma once

#include <cstddef>
#include <string>

namespace htc::kernels {

/// Contiguous double-precision primitives behind the tensor ops.
///
/// Every backend fills the same table. SIMD lanes always map to independent
/// output elements and the per-element operation order matches the scalar
/// reference, so all backends produce bit-identical results (the build
/// disables FP contraction to keep mul+add from fusing into FMA in one
/// backend but not another). tests/test_kernels.cpp asserts exact equality.
struct Backend {
  const char* name;
  /// y[i] += a * x[i]
  void (*axpy)(std::size_t n, double a, const double* x, double* y);
  /// out[i] = a[i] + b[i]
  void (*vadd)(std::size_t n, const double* a, const double* b, double* out);
  /// out[i] = a[i] - b[i]
  void (*vsub)(std::size_t n, const double* a, const double* b, double* out);
  /// out[i] = a[i] * b[i]
  void (*vmul)(std::size_t n, const double* a, const double* b, double* out);
  /// out[i] += a[i] * b[i]
  void (*vmac)(std::size_t n, const double* a, const double* b, double* out);
  /// x[i] *= a
  void (*vscale)(std::size_t n, double a, double* x);
  /// out[i] = a[i] > 0 ? a[i] : 0
  void (*vrelu)(std::size_t n, const double* a, double* out);
};

const Backend& scalar_backend();
const Backend* avx2_backend();  // null when not compiled in
const Backend* neon_backend();  // null when not compiled in

/// True when the running CPU can execute the AVX2 backend.
bool cpu_has_avx2();

/// Active backend. Selected once: HTC_KERNELS=scalar|avx2|neon overrides
/// auto-detection (best supported backend wins otherwise).
const Backend& active();
/// Force a backend by name; throws std::runtime_error if unavailable.
void set_active(const std::string& name);

inline void axpy(std::size_t n, double a, const double* x, double* y) {
  active().axpy(n, a, x, y);
}
inline void vadd(std::size_t n, const double* a, const double* b, double* out) {
  active().vadd(n, a, b, out);
}
inline void vsub(std::size_t n, const double* a, const double* b, double* out) {
  active().vsub(n, a, b, out);
}
inline void vmul(std::size_t n, const double* a, const double* b, double* out) {
  active().vmul(n, a, b, out);
}
inline void vmac(std::size_t n, const double* a, const double* b, double* out) {
  active().vmac(n, a, b, out);
}
inline void vscale(std::size_t n, double a, double* x) { active().vscale(n, a, x); }
inline void vrelu(std::size_t n, const double* a, double* out) { active().vrelu(n, a, out); }

}  // namespace htc::kernels

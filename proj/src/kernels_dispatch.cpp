#include "htc/kernels.hpp"

#include <cstdlib>
#include <stdexcept>

namespace htc::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

namespace {

const Backend* lookup(const std::string& name) {
  if (name == "scalar") return &scalar_backend();
  if (name == "avx2") {
    const Backend* b = avx2_backend();
    return (b && cpu_has_avx2()) ? b : nullptr;
  }
  if (name == "neon") return neon_backend();
  return nullptr;
}

const Backend* pick_default() {
  if (const char* env = std::getenv("HTC_KERNELS")) {
    if (const Backend* b = lookup(env)) return b;
    throw std::runtime_error(std::string("HTC_KERNELS requests unavailable backend: ") + env);
  }
  if (const Backend* b = lookup("avx2")) return b;
  if (const Backend* b = lookup("neon")) return b;
  return &scalar_backend();
}

const Backend*& active_slot() {
  static const Backend* slot = pick_default();
  return slot;
}

}  // namespace

const Backend& active() { return *active_slot(); }

void set_active(const std::string& name) {
  const Backend* b = lookup(name);
  if (!b) throw std::runtime_error("kernel backend unavailable: " + name);
  active_slot() = b;
}

}  // namespace htc::kernels

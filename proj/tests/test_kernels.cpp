#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "htc/kernels.hpp"
#include "htc/rng.hpp"

using htc::Rng;
namespace k = htc::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, 2.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

// Sizes chosen to hit empty input, sub-vector lengths, exact multiples of the
// 4-lane AVX2 and 2-lane NEON widths, and ragged tails.
const std::vector<std::size_t> kSizes = {0, 1, 2, 3, 4, 5, 7, 8, 9, 16, 31, 64, 257};

void check_backend_equivalence(const k::Backend& ref, const k::Backend& alt) {
  Rng rng(20240811);
  for (std::size_t n : kSizes) {
    const auto a = random_vec(n, rng);
    const auto b = random_vec(n, rng);
    const double c = rng.normal(0.0, 1.5);

    {
      auto y1 = random_vec(n, rng);
      auto y2 = y1;
      ref.axpy(n, c, a.data(), y1.data());
      alt.axpy(n, c, a.data(), y2.data());
      CHECK(bit_equal(y1, y2));
    }
    {
      std::vector<double> o1(n), o2(n);
      ref.vadd(n, a.data(), b.data(), o1.data());
      alt.vadd(n, a.data(), b.data(), o2.data());
      CHECK(bit_equal(o1, o2));
      ref.vsub(n, a.data(), b.data(), o1.data());
      alt.vsub(n, a.data(), b.data(), o2.data());
      CHECK(bit_equal(o1, o2));
      ref.vmul(n, a.data(), b.data(), o1.data());
      alt.vmul(n, a.data(), b.data(), o2.data());
      CHECK(bit_equal(o1, o2));
      ref.vrelu(n, a.data(), o1.data());
      alt.vrelu(n, a.data(), o2.data());
      CHECK(bit_equal(o1, o2));
    }
    {
      auto o1 = random_vec(n, rng);
      auto o2 = o1;
      ref.vmac(n, a.data(), b.data(), o1.data());
      alt.vmac(n, a.data(), b.data(), o2.data());
      CHECK(bit_equal(o1, o2));
    }
    {
      auto x1 = a;
      auto x2 = a;
      ref.vscale(n, c, x1.data());
      alt.vscale(n, c, x2.data());
      CHECK(bit_equal(x1, x2));
    }
  }
}

}  // namespace

TEST_CASE("scalar reference sanity") {
  const auto& s = k::scalar_backend();
  std::vector<double> y = {1.0, 2.0, 3.0};
  const std::vector<double> x = {10.0, 20.0, 30.0};
  s.axpy(3, 0.5, x.data(), y.data());
  CHECK(y == std::vector<double>{6.0, 12.0, 18.0});

  std::vector<double> r(4);
  const std::vector<double> in = {-1.0, 0.0, 2.5, -0.0};
  s.vrelu(4, in.data(), r.data());
  CHECK(r == std::vector<double>{0.0, 0.0, 2.5, 0.0});
}

TEST_CASE("avx2 backend matches scalar bit for bit") {
  const k::Backend* avx2 = k::avx2_backend();
  if (!avx2 || !k::cpu_has_avx2()) {
    MESSAGE("AVX2 unavailable on this host; skipping");
    return;
  }
  check_backend_equivalence(k::scalar_backend(), *avx2);
}

TEST_CASE("neon backend matches scalar bit for bit") {
  const k::Backend* neon = k::neon_backend();
  if (!neon) {
    MESSAGE("NEON unavailable on this host; skipping");
    return;
  }
  check_backend_equivalence(k::scalar_backend(), *neon);
}

TEST_CASE("dispatch selects a usable backend and can be forced") {
  const std::string original = k::active().name;
  CHECK((original == "scalar" || original == "avx2" || original == "neon"));

  k::set_active("scalar");
  CHECK(std::string(k::active().name) == "scalar");
  CHECK_THROWS_AS(k::set_active("sse42"), std::runtime_error);

  if (k::cpu_has_avx2() && k::avx2_backend()) {
    k::set_active("avx2");
    CHECK(std::string(k::active().name) == "avx2");
  }
  k::set_active(original);
}

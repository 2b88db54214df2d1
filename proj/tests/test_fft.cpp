#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "gisim/fft.hpp"

using namespace gisim;

namespace {

// literal O(n^4) DFT in standard index space
std::vector<cplx> brute_dft2(const std::vector<cplx>& in, int n, int sign) {
  std::vector<cplx> out(in.size());
  for (int ky = 0; ky < n; ++ky)
    for (int kx = 0; kx < n; ++kx) {
      cplx acc{};
      for (int jy = 0; jy < n; ++jy)
        for (int jx = 0; jx < n; ++jx) {
          double ph = sign * 2.0 * pi * (kx * jx + ky * jy) / n;
          acc += in[static_cast<std::size_t>(jy) * n + jx] *
                 std::polar(1.0, ph);
        }
      out[static_cast<std::size_t>(ky) * n + kx] = acc;
    }
  return out;
}

std::vector<cplx> random_field(int n, unsigned seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> nd;
  std::vector<cplx> v(static_cast<std::size_t>(n) * n);
  for (auto& z : v) z = cplx(nd(eng), nd(eng));
  return v;
}

double max_rel_err(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double scale = 0;
  for (const cplx& z : b) scale = std::max(scale, std::abs(z));
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  return worst;
}

} // namespace

TEST_CASE("dft2 agrees with the literal transform") {
  for (int n : {4, 8, 16}) {
    auto in = random_field(n, 7 + n);
    auto ref = brute_dft2(in, n, -1);
    auto got = in;
    dft2(got, n, -1);
    REQUIRE(max_rel_err(got, ref) < 1e-12);

    ref = brute_dft2(in, n, +1);
    got = in;
    dft2(got, n, +1);
    REQUIRE(max_rel_err(got, ref) < 1e-12);
  }
}

TEST_CASE("forward then backward recovers the input times n^2") {
  int n = 32;
  auto in = random_field(n, 11);
  auto a = in;
  dft2(a, n, -1);
  dft2(a, n, +1);
  double scale = 1.0 / (static_cast<double>(n) * n);
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] * scale - in[i]));
  REQUIRE(worst < 1e-12);
}

TEST_CASE("centered transform matches the shifted-index definition") {
  int n = 8;
  auto in = random_field(n, 3);
  auto got = in;
  centered_dft2(got, n, -1);

  // out[k] = sum_j in[j] exp(-2 pi i (k-n/2).(j-n/2) / n)
  std::vector<cplx> ref(in.size());
  for (int ky = 0; ky < n; ++ky)
    for (int kx = 0; kx < n; ++kx) {
      cplx acc{};
      for (int jy = 0; jy < n; ++jy)
        for (int jx = 0; jx < n; ++jx) {
          double ph = -2.0 * pi *
                      ((kx - n / 2) * (jx - n / 2) + (ky - n / 2) * (jy - n / 2)) /
                      n;
          acc += in[static_cast<std::size_t>(jy) * n + jx] *
                 std::polar(1.0, ph);
        }
      ref[static_cast<std::size_t>(ky) * n + kx] = acc;
    }
  REQUIRE(max_rel_err(got, ref) < 1e-12);
}

TEST_CASE("half_shift2 is an involution") {
  int n = 16;
  auto in = random_field(n, 5);
  auto a = in;
  detail::half_shift2(a, n);
  REQUIRE(a != in);
  detail::half_shift2(a, n);
  REQUIRE(a == in);
}

TEST_CASE("dft2 rejects a mismatched buffer") {
  std::vector<cplx> a(10);
  REQUIRE_THROWS_AS(dft2(a, 4, -1), error);
}

TEST_CASE("repeated transforms are bit-identical") {
  int n = 64;
  auto in = random_field(n, 13);
  auto a = in, b = in;
  dft2(a, n, -1);
  dft2(b, n, -1);
  REQUIRE(a == b);
}

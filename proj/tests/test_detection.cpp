#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "gisim/detection.hpp"

using namespace gisim;

TEST_CASE("mask constructors produce the advertised geometry") {
  GridSpec g = make_grid(16, 1.0e-3); // +-8 mm

  ObjectMask u = uniform_mask(g, 0.5);
  for (double v : u.t) REQUIRE(v == 0.5);
  REQUIRE(u.t2(3, 7) == Catch::Approx(0.25));

  ObjectMask d = disk_mask(g, 2.5e-3);
  REQUIRE(d.t[g.idx(8, 8)] == 1.0);               // center
  REQUIRE(d.t[g.idx(8 + 2, 8)] == 1.0);           // 2 mm, inside
  REQUIRE(d.t[g.idx(8 + 3, 8)] == 0.0);           // 3 mm, outside
  REQUIRE(d.t[g.idx(8 + 2, 8 + 2)] == 0.0);       // 2.83 mm, outside
  ObjectMask off = disk_mask(g, 1.5e-3, vec2{3.0e-3, 0.0});
  REQUIRE(off.t[g.idx(8 + 3, 8)] == 1.0);
  REQUIRE(off.t[g.idx(8, 8)] == 0.0);

  ObjectMask p = point_mask(g, vec2{2.2e-3, -1.4e-3});
  double total = std::accumulate(p.t.begin(), p.t.end(), 0.0);
  REQUIRE(total == 1.0);
  REQUIRE(p.t[g.idx(8 + 2, 8 - 1)] == 1.0); // rounded to nearest sample

  ObjectMask s = double_slit_mask(g, 6.0e-3, 1.1e-3, 4.0e-3);
  REQUIRE(s.t[g.idx(8 + 3, 8)] == 1.0);  // x = +3 mm on a slit center
  REQUIRE(s.t[g.idx(8 - 3, 8)] == 1.0);  // x = -3 mm
  REQUIRE(s.t[g.idx(8, 8)] == 0.0);      // between the slits
  REQUIRE(s.t[g.idx(8 + 3, 8 + 2)] == 1.0);  // y = 2 mm, inside the height
  REQUIRE(s.t[g.idx(8 + 3, 8 + 3)] == 0.0);  // y = 3 mm, beyond the height
}

TEST_CASE("mask validation") {
  GridSpec g = make_grid(4, 1.0e-3);
  REQUIRE_THROWS_AS(make_mask(g, std::vector<double>(3, 0.5)), error);
  REQUIRE_THROWS_AS(make_mask(g, std::vector<double>(16, 1.5)), error);
  REQUIRE_THROWS_AS(make_mask(g, std::vector<double>(16, -0.1)), error);
  REQUIRE_THROWS_AS(disk_mask(g, 0.0), error);
  REQUIRE_THROWS_AS(double_slit_mask(g, 1.0e-3, 0.0, 1.0e-3), error);
}

TEST_CASE("pinhole flux samples one cell") {
  GridSpec g = make_grid(8, 0.5e-3);
  RealField I(g);
  for (int iy = 0; iy < 8; ++iy)
    for (int ix = 0; ix < 8; ++ix) I.at(ix, iy) = 10.0 * ix + iy;

  double cell = g.pitch * g.pitch;
  REQUIRE(pinhole_flux(I, vec2{}, 0.0) == Catch::Approx(I.at(4, 4) * cell));
  REQUIRE(pinhole_flux(I, vec2{1.1e-3, -0.4e-3}, 0.0) ==
          Catch::Approx(I.at(6, 3) * cell));
  double a1 = 0.25 * cell;
  REQUIRE(pinhole_flux(I, vec2{}, a1) == Catch::Approx(I.at(4, 4) * a1));
  REQUIRE_THROWS_AS(pinhole_flux(I, vec2{}, 2.0 * cell), error);
  REQUIRE_THROWS_AS(pinhole_flux(I, vec2{1.0, 1.0}, 0.0), error); // off grid

  ComplexField f(g);
  f.at(4, 4) = cplx(3.0, 4.0); // |f|^2 = 25
  DetectorModel det;
  REQUIRE(pinhole_flux(f, vec2{}, det) == Catch::Approx(25.0 * cell));
}

TEST_CASE("bucket flux integrates the masked intensity") {
  GridSpec g = make_grid(8, 0.5e-3);
  RealField I(g);
  for (std::size_t i = 0; i < I.v.size(); ++i) I.v[i] = 2.0;
  ObjectMask m = uniform_mask(g, 0.5); // t^2 = 0.25
  double want = 2.0 * 0.25 * 64 * g.pitch * g.pitch;
  REQUIRE(bucket_flux(I, m) == Catch::Approx(want).epsilon(1e-12));

  ObjectMask wrong = uniform_mask(make_grid(16, 0.5e-3), 1.0);
  REQUIRE_THROWS_AS(bucket_flux(I, wrong), error);

  ComplexField f(g);
  for (cplx& z : f.v) z = cplx(0.0, 3.0);
  REQUIRE(bucket_flux(f, m) ==
          Catch::Approx(9.0 * 0.25 * 64 * g.pitch * g.pitch).epsilon(1e-12));
}

TEST_CASE("impulse taps and boxcar filtering") {
  Impulse inst;
  REQUIRE(detail::impulse_taps(inst, 1.0e-4) == 1);

  Impulse box{Impulse::boxcar, 3.0e-4};
  REQUIRE(detail::impulse_taps(box, 1.0e-4) == 3);
  REQUIRE_THROWS_AS(detail::impulse_taps(Impulse{Impulse::boxcar, 2.5e-4},
                                         1.0e-4),
                    error);
  REQUIRE_THROWS_AS(detail::impulse_taps(Impulse{Impulse::boxcar, 0.0}, 1.0e-4),
                    error);

  std::vector<double> c(10, 5.0);
  auto yc = detail::apply_impulse(c, 1.0e-4, box);
  REQUIRE(yc[0] == Catch::Approx(5.0 / 3.0)); // causal warm-up
  for (std::size_t k = 2; k < yc.size(); ++k)
    REQUIRE(yc[k] == Catch::Approx(5.0));

  std::vector<double> step(10, 0.0);
  for (std::size_t k = 5; k < step.size(); ++k) step[k] = 3.0;
  auto ys = detail::apply_impulse(step, 1.0e-4, box);
  REQUIRE(ys[4] == 0.0);
  REQUIRE(ys[5] == Catch::Approx(1.0));
  REQUIRE(ys[6] == Catch::Approx(2.0));
  REQUIRE(ys[7] == Catch::Approx(3.0));
}

TEST_CASE("noiseless current conversion scales by eta and q") {
  DetectorModel det;
  det.eta = 0.8;
  det.q = 1.6e-19;
  std::vector<double> flux = {1.0e6, 2.0e6, 0.0, 5.0e5};
  CurrentSeries s = to_current(flux, 0.25, 1.0e-4, det);
  REQUIRE(s.t0 == 0.25);
  REQUIRE(s.dt == 1.0e-4);
  REQUIRE(s.v.size() == 4);
  for (std::size_t k = 0; k < 4; ++k)
    REQUIRE(s.v[k] == Catch::Approx(det.q * det.eta * flux[k]));

  REQUIRE_THROWS_AS(to_current({-1.0}, 0.0, 1.0e-4, det), error);
  REQUIRE_THROWS_AS(to_current(flux, 0.0, 0.0, det), error);
}

TEST_CASE("detector validation") {
  DetectorModel det;
  det.eta = 0.0;
  REQUIRE_THROWS_AS(validate(det), error);
  det = DetectorModel{};
  det.q = -1.0;
  REQUIRE_THROWS_AS(validate(det), error);
  det = DetectorModel{};
  det.h = Impulse{Impulse::boxcar, 0.0};
  REQUIRE_THROWS_AS(validate(det), error);
  det = DetectorModel{};
  det.shot_noise = true; // missing dt and seed
  REQUIRE_THROWS_AS(validate(det), error);
  det.dt = 1.0e-4;
  REQUIRE_THROWS_AS(validate(det), error);
  det.noise_seed = 7;
  REQUIRE_NOTHROW(validate(det));
}

TEST_CASE("shot noise is a seeded poisson resampling of the bin counts") {
  DetectorModel det;
  det.eta = 0.5;
  det.shot_noise = true;
  det.dt = 1.0e-4;
  det.noise_seed = 42;

  std::vector<double> flux(4000, 2.0e6); // 100 expected counts per bin
  CurrentSeries a = to_current(flux, 0.0, det.dt, det);
  CurrentSeries b = to_current(flux, 0.0, det.dt, det);
  REQUIRE(a.v == b.v); // same stream, bit-identical

  CurrentSeries c = to_current(flux, 0.0, det.dt, det, 1);
  REQUIRE(a.v != c.v); // distinct stream index decorrelates

  double mean = std::accumulate(a.v.begin(), a.v.end(), 0.0) / a.v.size();
  double expect = det.eta * 2.0e6;
  // mean of 4000 bins at 100 counts each: se ~ 0.16%
  REQUIRE(mean == Catch::Approx(expect).epsilon(0.01));

  double var = 0.0;
  for (double v : a.v) var += (v - mean) * (v - mean);
  var /= a.v.size() - 1;
  double expect_var = expect / det.dt; // counts variance / dt^2
  REQUIRE(var == Catch::Approx(expect_var).epsilon(0.1));

  // counts are integers divided by dt
  for (std::size_t k = 0; k < 8; ++k) {
    double n = a.v[k] * det.dt;
    REQUIRE(n == Catch::Approx(std::round(n)).margin(1e-9));
  }
}

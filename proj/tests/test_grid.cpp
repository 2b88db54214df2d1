#include <catch2/catch_amalgamated.hpp>

#include "gisim/grid.hpp"

using namespace gisim;

TEST_CASE("grid coordinates are centered with the origin on a sample") {
  GridSpec g = make_grid(8, 0.5);
  REQUIRE(g.coord_x(4) == 0.0);
  REQUIRE(g.coord_x(0) == -2.0);
  REQUIRE(g.coord_x(7) == 1.5);
  REQUIRE(g.extent() == 4.0);
  REQUIRE(g.size() == 64);

  GridSpec off = make_grid(8, 0.5, {1.0, -2.0});
  REQUIRE(off.coord(4, 4).x == 1.0);
  REQUIRE(off.coord(4, 4).y == -2.0);
}

TEST_CASE("grid rejects odd or degenerate shapes") {
  REQUIRE_THROWS_AS(make_grid(7, 0.5), error);
  REQUIRE_THROWS_AS(make_grid(0, 0.5), error);
  REQUIRE_THROWS_AS(make_grid(8, 0.0), error);
  REQUIRE_THROWS_AS(make_grid(8, -1.0), error);
  try {
    make_grid(7, 0.5);
  } catch (const error& e) {
    REQUIRE(e.kind == errc::invalid_argument);
  }
}

TEST_CASE("nearest sample lookup rounds and bounds-checks") {
  GridSpec g = make_grid(8, 0.5);
  int ix, iy;
  g.nearest({0.2, -0.2}, ix, iy);
  REQUIRE(ix == 4);
  REQUIRE(iy == 4);
  g.nearest({0.26, 0.0}, ix, iy);
  REQUIRE(ix == 5);
  REQUIRE_THROWS_AS(g.nearest({10.0, 0.0}, ix, iy), error);
}

TEST_CASE("row-major indexing matches at()") {
  GridSpec g = make_grid(4, 1.0);
  ComplexField f(g);
  f.at(1, 2) = cplx(3.0, -1.0);
  REQUIRE(f.v[2 * 4 + 1] == cplx(3.0, -1.0));
}

TEST_CASE("intensity and integration") {
  GridSpec g = make_grid(4, 0.25);
  ComplexField f(g);
  for (auto& z : f.v) z = cplx(0.0, 2.0);
  RealField I = intensity(f);
  for (double v : I.v) REQUIRE(v == 4.0);
  // 16 samples * 4 * (0.25)^2
  REQUIRE(integrate(I) == Catch::Approx(4.0));
}

TEST_CASE("field constructors size their storage") {
  GridSpec g = make_grid(6, 1.0);
  ComplexField f(g, 2.5);
  REQUIRE(f.v.size() == 36);
  REQUIRE(f.timestamp == 2.5);
  RealField r(g);
  REQUIRE(r.v.size() == 36);
}

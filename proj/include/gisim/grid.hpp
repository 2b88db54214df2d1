#pragma once

#include <cmath>
#include <vector>

#include "gisim/common.hpp"

namespace gisim {

// Square sampling lattice in a transverse plane.  Sample k along an axis sits
// at (k - n/2)*pitch relative to the grid center, so the origin is always a
// sample point for even n.
struct GridSpec {
  int n = 0;        // samples per axis, even
  double pitch = 0; // m
  vec2 center{};    // m

  double extent() const { return n * pitch; }
  double coord_x(int k) const { return center.x + (k - n / 2) * pitch; }
  double coord_y(int k) const { return center.y + (k - n / 2) * pitch; }
  vec2 coord(int ix, int iy) const { return {coord_x(ix), coord_y(iy)}; }
  std::size_t idx(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * n + ix;
  }
  std::size_t size() const { return static_cast<std::size_t>(n) * n; }

  // nearest sample to a physical position; throws when outside the lattice
  void nearest(vec2 pos, int& ix, int& iy) const {
    double fx = (pos.x - center.x) / pitch + n / 2;
    double fy = (pos.y - center.y) / pitch + n / 2;
    ix = static_cast<int>(std::lround(fx));
    iy = static_cast<int>(std::lround(fy));
    require(ix >= 0 && ix < n && iy >= 0 && iy < n, errc::out_of_grid,
            "position outside grid");
  }

  bool operator==(const GridSpec& o) const {
    return n == o.n && pitch == o.pitch && center.x == o.center.x &&
           center.y == o.center.y;
  }
};

inline GridSpec make_grid(int n, double pitch, vec2 center = {}) {
  require(n >= 2 && n % 2 == 0, errc::invalid_argument,
          "grid size must be even and at least 2");
  require(pitch > 0.0, errc::invalid_argument, "grid pitch must be positive");
  return GridSpec{n, pitch, center};
}

// Scalar field sample sets.  timestamp tracks emission/arrival time of the
// frame as it moves through propagation steps.
struct ComplexField {
  GridSpec grid;
  double timestamp = 0.0;
  std::vector<cplx> v;

  ComplexField() = default;
  explicit ComplexField(const GridSpec& g, double t = 0.0)
      : grid(g), timestamp(t), v(g.size(), cplx{}) {}

  cplx& at(int ix, int iy) { return v[grid.idx(ix, iy)]; }
  cplx at(int ix, int iy) const { return v[grid.idx(ix, iy)]; }
};

struct RealField {
  GridSpec grid;
  double timestamp = 0.0;
  std::vector<double> v;

  RealField() = default;
  explicit RealField(const GridSpec& g, double t = 0.0)
      : grid(g), timestamp(t), v(g.size(), 0.0) {}

  double& at(int ix, int iy) { return v[grid.idx(ix, iy)]; }
  double at(int ix, int iy) const { return v[grid.idx(ix, iy)]; }
};

inline RealField intensity(const ComplexField& f) {
  RealField out(f.grid, f.timestamp);
  for (std::size_t i = 0; i < f.v.size(); ++i) out.v[i] = std::norm(f.v[i]);
  return out;
}

// plane integral by the midpoint rule the lattice realizes: sum * pitch^2
inline double integrate(const RealField& f) {
  double s = 0.0;
  for (double x : f.v) s += x;
  return s * f.grid.pitch * f.grid.pitch;
}

inline double integrate(const RealField& f, const RealField& weight) {
  require(f.grid == weight.grid, errc::grid_mismatch,
          "integrate: field and weight live on different grids");
  double s = 0.0;
  for (std::size_t i = 0; i < f.v.size(); ++i) s += f.v[i] * weight.v[i];
  return s * f.grid.pitch * f.grid.pitch;
}

} // namespace gisim

#pragma once

#include <cmath>

#include "gisim/fft.hpp"
#include "gisim/grid.hpp"

namespace gisim {

// Paraxial free-space step over a signed distance L.  The field at the output
// plane is
//   E_out(r) = (k0 / (i 2 pi L)) e^{i k0 L} Int dr' E_in(r')
//              e^{i k0 |r - r'|^2 / (2 L)}
// evaluated by the single-transform method: chirp, one centered DFT, chirp.
// The output lattice is fixed by the transform, pitch_out = lambda0*|L| /
// (n * pitch_in).  Negative L means the conjugated kernel (a backward step);
// the output pitch rule uses |L| and the frame timestamp moves by L/c either
// way.

struct PropagationPlan {
  GridSpec in;
  GridSpec out;
  double lambda0 = 0;
  double L = 0;
};

inline PropagationPlan plan_fresnel(const GridSpec& in, double lambda0,
                                    double L) {
  double k0 = wavenumber(lambda0);
  (void)k0;
  require(L != 0.0, errc::invalid_argument, "zero propagation distance");
  require(in.n >= 2 && in.n % 2 == 0 && in.pitch > 0.0, errc::invalid_argument,
          "propagation needs a valid grid");
  // the input chirp must be sampled below Nyquist out to the grid edge
  double need = in.n * in.pitch * in.pitch;
  require(need <= lambda0 * std::abs(L) * (1.0 + 1e-9), errc::sampling_violation,
          "grid too coarse (or distance too short) for the single-transform step");
  double pitch_out = lambda0 * std::abs(L) / (in.n * in.pitch);
  GridSpec out = make_grid(in.n, pitch_out);
  return PropagationPlan{in, out, lambda0, L};
}

namespace detail {

inline ComplexField fresnel_forward(const ComplexField& f, double lambda0,
                                    double L) {
  PropagationPlan plan = plan_fresnel(f.grid, lambda0, L);
  double k0 = wavenumber(lambda0);
  int n = f.grid.n;

  ComplexField out(plan.out, f.timestamp + L / speed_of_light);
  std::vector<cplx>& a = out.v;
  a.assign(f.v.begin(), f.v.end());

  double cin = k0 / (2.0 * L);
  for (int iy = 0; iy < n; ++iy) {
    double y = f.grid.coord_y(iy);
    for (int ix = 0; ix < n; ++ix) {
      double x = f.grid.coord_x(ix);
      a[f.grid.idx(ix, iy)] *= std::polar(1.0, cin * (x * x + y * y));
    }
  }

  centered_dft2(a, n, -1);

  // k0/(i 2 pi L) * e^{i k0 L} * pitch_in^2
  cplx pref = cplx(0.0, -1.0) * (k0 / (2.0 * pi * L)) * std::polar(1.0, k0 * L) *
              (f.grid.pitch * f.grid.pitch);
  double cout = k0 / (2.0 * L);
  // an off-center input lattice leaves a linear phase the index-space DFT
  // cannot see; restore it here (exactly zero for centered grids)
  double sx = k0 / L * f.grid.center.x;
  double sy = k0 / L * f.grid.center.y;
  for (int iy = 0; iy < n; ++iy) {
    double y = plan.out.coord_y(iy);
    for (int ix = 0; ix < n; ++ix) {
      double x = plan.out.coord_x(ix);
      a[plan.out.idx(ix, iy)] *=
          pref * std::polar(1.0, cout * (x * x + y * y) - sx * x - sy * y);
    }
  }
  return out;
}

} // namespace detail

inline ComplexField fresnel_propagate(const ComplexField& f, double lambda0,
                                      double L) {
  if (L > 0.0) return detail::fresnel_forward(f, lambda0, L);
  // conjugated kernel: conj{ forward step applied to conj(field) }
  ComplexField tmp = f;
  for (cplx& z : tmp.v) z = std::conj(z);
  ComplexField out = detail::fresnel_forward(tmp, lambda0, -L);
  for (cplx& z : out.v) z = std::conj(z);
  out.timestamp = f.timestamp + L / speed_of_light;
  return out;
}

// Literal double-sum evaluation of the same step onto an arbitrary output
// lattice.  O(n^4): the independent reference the transform path is checked
// against, and a fallback when an output grid is imposed.
inline ComplexField direct_oracle(const ComplexField& f, double lambda0,
                                  double L, const GridSpec& out_grid) {
  require(L != 0.0, errc::invalid_argument, "zero propagation distance");
  require(f.grid.n <= 64 && out_grid.n <= 64, errc::size_exceeded,
          "direct_oracle is O(n^4); use grids of 64 or fewer samples");
  double k0 = wavenumber(lambda0);
  double Labs = std::abs(L);
  double sgn = L > 0.0 ? 1.0 : -1.0;
  // keep the huge constant k0 L out of the per-term phase: its argument
  // reduction would otherwise cost ~1e-9 of relative accuracy
  cplx pref = sgn * cplx(0.0, -1.0) * (k0 / (2.0 * pi * Labs)) *
              (f.grid.pitch * f.grid.pitch) * std::polar(1.0, sgn * k0 * Labs);

  ComplexField out(out_grid, f.timestamp + L / speed_of_light);
  for (int oy = 0; oy < out_grid.n; ++oy) {
    for (int ox = 0; ox < out_grid.n; ++ox) {
      vec2 r = out_grid.coord(ox, oy);
      cplx acc{};
      for (int iy = 0; iy < f.grid.n; ++iy) {
        for (int ix = 0; ix < f.grid.n; ++ix) {
          vec2 rp = f.grid.coord(ix, iy);
          double phase = k0 * norm2(r - rp) / (2.0 * Labs);
          acc += f.at(ix, iy) * std::polar(1.0, sgn * phase);
        }
      }
      out.at(ox, oy) = pref * acc;
    }
  }
  return out;
}

} // namespace gisim

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gisim/grid.hpp"
#include "gisim/rng.hpp"

namespace gisim {

// Amplitude transmittance mask sampled on the plane it will be applied in.
// Values are clamped nowhere; construction enforces |T| <= 1.
struct ObjectMask {
  GridSpec grid;
  std::vector<double> t; // amplitude transmittance

  double t2(int ix, int iy) const {
    double v = t[grid.idx(ix, iy)];
    return v * v;
  }
};

inline ObjectMask make_mask(const GridSpec& g, std::vector<double> t) {
  require(t.size() == g.size(), errc::grid_mismatch,
          "mask values must match the grid");
  for (double v : t)
    require(v >= 0.0 && v <= 1.0, errc::invalid_argument,
            "transmittance must lie in [0, 1]");
  return ObjectMask{g, std::move(t)};
}

inline ObjectMask uniform_mask(const GridSpec& g, double t = 1.0) {
  return make_mask(g, std::vector<double>(g.size(), t));
}

inline ObjectMask disk_mask(const GridSpec& g, double radius, vec2 center = {}) {
  require(radius > 0.0, errc::invalid_argument, "disk radius must be positive");
  std::vector<double> t(g.size(), 0.0);
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix)
      if (norm2(g.coord(ix, iy) - center) <= radius * radius)
        t[g.idx(ix, iy)] = 1.0;
  return ObjectMask{g, std::move(t)};
}

// single transparent sample nearest to pos
inline ObjectMask point_mask(const GridSpec& g, vec2 pos = {}) {
  std::vector<double> t(g.size(), 0.0);
  int ix, iy;
  g.nearest(pos, ix, iy);
  t[g.idx(ix, iy)] = 1.0;
  return ObjectMask{g, std::move(t)};
}

// two vertical slits of the given width, centers at x = +-separation/2
inline ObjectMask double_slit_mask(const GridSpec& g, double separation,
                                   double width, double height) {
  require(separation > 0 && width > 0 && height > 0, errc::invalid_argument,
          "slit geometry must be positive");
  std::vector<double> t(g.size(), 0.0);
  for (int iy = 0; iy < g.n; ++iy) {
    double y = g.coord_y(iy);
    if (std::abs(y) > height / 2.0) continue;
    for (int ix = 0; ix < g.n; ++ix) {
      double x = g.coord_x(ix);
      if (std::abs(x - separation / 2.0) <= width / 2.0 ||
          std::abs(x + separation / 2.0) <= width / 2.0)
        t[g.idx(ix, iy)] = 1.0;
    }
  }
  return ObjectMask{g, std::move(t)};
}

// Photodetector description.  q = 1 leaves currents in correlation-friendly
// units (photons/s weighted by efficiency); set the electron charge for amps.
struct Impulse {
  enum Kind { instantaneous, boxcar } kind = instantaneous;
  double width = 0.0; // s, boxcar only
};

struct DetectorModel {
  double eta = 1.0; // quantum efficiency
  double q = 1.0;   // charge per detection event
  double A1 = 0.0;  // pinhole area, m^2; 0 = one grid cell
  Impulse h{};
  bool shot_noise = false;
  double dt = 0.0; // integration bin for shot noise, s
  std::optional<std::uint64_t> noise_seed;
};

inline void validate(const DetectorModel& d) {
  require(d.eta > 0.0 && d.eta <= 1.0, errc::invalid_argument,
          "quantum efficiency must lie in (0, 1]");
  require(d.q > 0.0, errc::invalid_argument, "charge must be positive");
  if (d.h.kind == Impulse::boxcar)
    require(d.h.width > 0.0, errc::invalid_impulse,
            "boxcar impulse needs a positive width");
  if (d.shot_noise) {
    require(d.dt > 0.0, errc::invalid_argument,
            "shot noise needs an integration bin dt");
    require(d.noise_seed.has_value(), errc::invalid_argument,
            "shot noise needs an explicit seed");
  }
}

// Photon flux accepted by a pinhole of area A1 centered at pos: the nearest
// intensity sample times the pinhole area.  A1 may not exceed one grid cell.
inline double pinhole_flux(const RealField& I, vec2 pos, double A1) {
  double cell = I.grid.pitch * I.grid.pitch;
  if (A1 <= 0.0) A1 = cell;
  require(A1 <= cell * (1.0 + 1e-12), errc::invalid_argument,
          "pinhole larger than one grid cell is not point-like");
  int ix, iy;
  I.grid.nearest(pos, ix, iy);
  return A1 * I.at(ix, iy);
}

inline double pinhole_flux(const ComplexField& f, vec2 pos,
                           const DetectorModel& det) {
  return pinhole_flux(intensity(f), pos, det.A1);
}

// Photon flux collected behind the mask: Int I(r) |T(r)|^2 dr
inline double bucket_flux(const RealField& I, const ObjectMask& mask) {
  require(I.grid == mask.grid, errc::grid_mismatch,
          "bucket mask must live on the intensity grid");
  double s = 0.0;
  for (int iy = 0; iy < I.grid.n; ++iy)
    for (int ix = 0; ix < I.grid.n; ++ix)
      s += I.at(ix, iy) * mask.t2(ix, iy);
  return s * I.grid.pitch * I.grid.pitch;
}

inline double bucket_flux(const ComplexField& f, const ObjectMask& mask) {
  return bucket_flux(intensity(f), mask);
}

struct CurrentSeries {
  double t0 = 0.0; // time of the first sample, s
  double dt = 0.0; // sample spacing, s
  std::vector<double> v;
};

namespace detail {

// boxcar tap count; the width must be an integer multiple of dt
inline int impulse_taps(const Impulse& h, double dt) {
  if (h.kind == Impulse::instantaneous) return 1;
  require(h.width > 0.0, errc::invalid_impulse, "boxcar width must be positive");
  double ratio = h.width / dt;
  int taps = static_cast<int>(std::llround(ratio));
  require(taps >= 1 && std::abs(ratio - taps) <= 1e-9 * ratio,
          errc::invalid_impulse,
          "boxcar width must be an integer multiple of the sample spacing");
  return taps;
}

inline std::vector<double> apply_impulse(const std::vector<double>& x,
                                         double dt, const Impulse& h) {
  if (h.kind == Impulse::instantaneous) return x;
  int taps = impulse_taps(h, dt);
  double w = 1.0 / (taps * dt);
  std::vector<double> y(x.size(), 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    acc += x[k];
    if (k >= static_cast<std::size_t>(taps)) acc -= x[k - taps];
    y[k] = acc * w * dt;
  }
  return y;
}

} // namespace detail

// Convert a photon flux sequence (photons/s sampled at dt) into a
// photocurrent series.  With shot noise on, each bin carries a Poisson draw
// of the expected count eta*F*dt; noise_tag decorrelates distinct detectors
// fed from the same master seed.
inline CurrentSeries to_current(const std::vector<double>& flux, double t0,
                                double dt, const DetectorModel& det,
                                std::uint64_t noise_stream_index = 0) {
  validate(det);
  require(dt > 0.0, errc::invalid_argument, "sample spacing must be positive");
  std::vector<double> mean(flux.size());
  for (std::size_t k = 0; k < flux.size(); ++k) {
    require(flux[k] >= 0.0, errc::invalid_argument, "flux must be nonnegative");
    mean[k] = det.eta * flux[k];
  }
  if (det.shot_noise) {
    Rng rng(stream_seed(*det.noise_seed, "detector-noise", noise_stream_index));
    for (std::size_t k = 0; k < mean.size(); ++k)
      mean[k] = rng.poisson(mean[k] * det.dt) / det.dt;
  }
  auto filtered = detail::apply_impulse(mean, dt, det.h);
  CurrentSeries out;
  out.t0 = t0;
  out.dt = dt;
  out.v.resize(filtered.size());
  for (std::size_t k = 0; k < filtered.size(); ++k)
    out.v[k] = det.q * filtered[k];
  return out;
}

} // namespace gisim

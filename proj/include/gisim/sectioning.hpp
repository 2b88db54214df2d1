#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gisim/correlator.hpp"

namespace gisim {

// ---------------------------------------------------------------------------
// Exact per-pixel propagation of the modulator field onto arbitrary grids.
//
// The pupil field is a sum of piecewise-constant pixels, so its propagated
// field is a phase-weighted sum of fixed pixel diffraction patterns,
//   E(r, t) = sum_p e^{i phi_p(t)} F_p(r),
// with F_p a separable product of 1D Fresnel integrals over the pixel
// aperture.  Those integrals are smooth (at most a few chirp cycles across
// one pixel anywhere in the field of view), so composite Simpson quadrature
// evaluates them to near machine accuracy.  This route makes no far-field
// approximation and places no pitch constraint on the evaluation grid, which
// is what depth scanning needs.
// ---------------------------------------------------------------------------
class SlmModeBank {
public:
  SlmModeBank(const SlmParams& s, double L, const GridSpec& scan)
      : s_(s), L_(L), scan_(scan) {
    validate(s);
    require(L > 0.0, errc::invalid_argument,
            "propagation distance must be positive");
    double k0 = wavenumber(s.lambda0);
    int side = s.side();
    int n = scan.n;

    double umax = 0.5 * scan.extent() +
                  std::max(std::abs(scan.center.x), std::abs(scan.center.y)) +
                  s.D() / 2.0;
    double cycles = s.d * umax / (s.lambda0 * L);
    int segs = std::clamp(static_cast<int>(std::ceil(16.0 * cycles)), 32, 256);

    // per-axis square root of the 2D Fresnel prefactor k0 / (i 2 pi L)
    cplx pref = std::polar(std::sqrt(k0 / (2.0 * pi * L)),
                           k0 * L / 2.0 - pi / 4.0);
    gx_.resize(static_cast<std::size_t>(side) * n);
    gy_.resize(static_cast<std::size_t>(side) * n);
    for (int j = 0; j < side; ++j) {
      double up = (j - s.M) * s.d; // pixel center on this axis
      for (int i = 0; i < n; ++i) {
        gx_[static_cast<std::size_t>(j) * n + i] =
            pref * pixel_integral(scan.coord_x(i) - up, k0, segs);
        gy_[static_cast<std::size_t>(j) * n + i] =
            pref * pixel_integral(scan.coord_y(i) - up, k0, segs);
      }
    }
  }

  const GridSpec& grid() const { return scan_; }
  double distance() const { return L_; }

  // field of one arm at the scan plane; phases in row-major pixel order
  ComplexField field(const std::vector<double>& phases, double t = 0.0) const {
    int side = s_.side();
    require(static_cast<int>(phases.size()) == s_.pixels(),
            errc::invalid_argument, "one phase per pixel required");
    int n = scan_.n;
    double amp = std::sqrt(s_.P) / s_.D();
    ComplexField f(scan_, t + L_ / speed_of_light);
    std::vector<cplx> row(n);
    for (int jy = 0; jy < side; ++jy) {
      std::fill(row.begin(), row.end(), cplx{});
      for (int jx = 0; jx < side; ++jx) {
        cplx ph = std::polar(1.0, phases[static_cast<std::size_t>(jy) * side + jx]);
        const cplx* g = gx_.data() + static_cast<std::size_t>(jx) * n;
        for (int i = 0; i < n; ++i) row[i] += ph * g[i];
      }
      const cplx* g = gy_.data() + static_cast<std::size_t>(jy) * n;
      for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) f.at(ix, iy) += g[iy] * row[ix];
    }
    for (cplx& z : f.v) z *= amp;
    return f;
  }

  // intensity of one arm after the 50/50 split
  RealField arm_intensity(const std::vector<double>& phases, double t = 0.0) const {
    RealField I = intensity(field(phases, t));
    for (double& x : I.v) x *= 0.5;
    return I;
  }

private:
  // Int over the pixel aperture of e^{i k0 (u - u')^2 / 2L} du', composite
  // Simpson with the pixel center shifted into the offset u
  cplx pixel_integral(double u, double k0, int segs) const {
    double h = s_.d / (2 * segs);
    cplx acc{};
    auto f = [&](double x) {
      double w = u - x;
      return std::polar(1.0, k0 * w * w / (2.0 * L_));
    };
    for (int m = 0; m < segs; ++m) {
      double a = -s_.d / 2 + 2 * m * h;
      acc += f(a) + 4.0 * f(a + h) + f(a + 2 * h);
    }
    return acc * (h / 3.0);
  }

  SlmParams s_;
  double L_;
  GridSpec scan_;
  std::vector<cplx> gx_, gy_;
};

// ---------------------------------------------------------------------------
// Reference stacks: precomputed mean-subtracted reference intensities at a
// range of propagation distances, reusable across objects.
// ---------------------------------------------------------------------------

struct ReferenceStack {
  double lambda0 = 0;
  double dt = 0;
  std::size_t frames = 0;
  std::uint64_t fingerprint = 0;
  std::vector<double> depths;
  std::vector<GridSpec> grids;
  // delta[j][k] is the mean-subtracted reference frame k at depth j
  std::vector<std::vector<std::vector<double>>> delta;
  std::vector<std::vector<double>> mean;
};

namespace detail {

inline std::uint64_t hash_f64(std::uint64_t h, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  return fnv1a64(&bits, sizeof bits, h);
}

inline std::uint64_t hash_grid(std::uint64_t h, const GridSpec& g) {
  std::int64_t n = g.n;
  h = fnv1a64(&n, sizeof n, h);
  h = hash_f64(h, g.pitch);
  h = hash_f64(h, g.center.x);
  return hash_f64(h, g.center.y);
}

} // namespace detail

// Identity of a stack: the modulation schedule, wavelength, timing, depths,
// and grids.  Any change invalidates cached stacks outright.
inline std::uint64_t stack_fingerprint(const SlmParams& s,
                                       const ModulationScheme& m,
                                       double lambda0, double dt,
                                       std::size_t frames,
                                       const std::vector<double>& depths,
                                       const std::vector<GridSpec>& grids) {
  std::uint64_t h = fnv1a64("slm-stack", 9);
  h = detail::hash_f64(h, lambda0);
  h = detail::hash_f64(h, s.d);
  std::int64_t M = s.M;
  h = fnv1a64(&M, sizeof M, h);
  h = detail::hash_f64(h, s.P);
  h = detail::hash_f64(h, s.T0);
  std::int64_t kind = static_cast<std::int64_t>(m.kind);
  h = fnv1a64(&kind, sizeof kind, h);
  h = detail::hash_f64(h, m.Phi);
  h = detail::hash_f64(h, m.Omega0);
  for (double w : m.delta_omega) h = detail::hash_f64(h, w);
  for (double w : m.psi) h = detail::hash_f64(h, w);
  h = fnv1a64(&m.seed, sizeof m.seed, h);
  h = detail::hash_f64(h, dt);
  std::uint64_t fr = frames;
  h = fnv1a64(&fr, sizeof fr, h);
  for (double d : depths) h = detail::hash_f64(h, d);
  for (const GridSpec& g : grids) h = detail::hash_grid(h, g);
  return h;
}

struct StackOptions {
  // When set, every depth is evaluated on this one grid via the exact
  // per-pixel route instead of the per-depth single-transform grid.  Depth
  // scans need this: the natural grids cannot resolve the defocused spot at
  // bench-scale geometries.
  std::optional<GridSpec> scan;
};

inline ReferenceStack build_stack(const ScenarioConfig& cfg,
                                  const std::vector<double>& depths,
                                  const StackOptions& opt = {}) {
  require(cfg.source == SourceKind::slm, errc::invalid_argument,
          "reference stacks need an slm source");
  require(cfg.scheme.kind == Modulation::sinusoidal,
          errc::nondeterministic_source,
          "reference stacks need deterministic modulation");
  validate(cfg.slm);
  validate_scheme(cfg.slm, cfg.scheme);
  require(!depths.empty(), errc::invalid_argument, "no depths given");
  for (std::size_t a = 0; a < depths.size(); ++a) {
    require(depths[a] > 0.0, errc::invalid_argument, "depths must be positive");
    double ff = wavenumber(cfg.lambda0) * cfg.slm.d * cfg.slm.D() / depths[a];
    require(ff <= 0.1, errc::far_field_violation,
            "far-field factor k0*d*D/L = " + std::to_string(ff) +
                " exceeds the 0.1 limit at depth " + std::to_string(depths[a]));
    for (std::size_t b = a + 1; b < depths.size(); ++b)
      require(depths[a] != depths[b], errc::invalid_argument,
              "depths must be distinct");
  }

  ReferenceStack st;
  st.lambda0 = cfg.lambda0;
  st.dt = cfg.dt;
  st.frames = cfg.frames;
  st.depths = depths;
  for (double Lj : depths) {
    if (opt.scan) {
      st.grids.push_back(*opt.scan);
    } else {
      ScenarioConfig c = cfg;
      c.L = Lj;
      st.grids.push_back(plan_fresnel(source_grid(c), c.lambda0, Lj).out);
    }
  }
  st.fingerprint = stack_fingerprint(cfg.slm, cfg.scheme, cfg.lambda0, cfg.dt,
                                     cfg.frames, st.depths, st.grids);

  double total = 0;
  for (const GridSpec& g : st.grids)
    total += static_cast<double>(g.size()) * cfg.frames;
  require(total <= 3.0e8, errc::size_exceeded,
          "stack would exceed the in-memory budget");

  std::vector<double> times(cfg.frames);
  for (std::size_t k = 0; k < cfg.frames; ++k) times[k] = k * cfg.dt;

  st.delta.resize(depths.size());
  st.mean.resize(depths.size());
  for (std::size_t j = 0; j < depths.size(); ++j) {
    std::size_t npx = st.grids[j].size();
    st.delta[j].assign(cfg.frames, std::vector<double>(npx));
    std::vector<double>& mean = st.mean[j];
    mean.assign(npx, 0.0);

    if (opt.scan) {
      SlmModeBank bank(cfg.slm, depths[j], st.grids[j]);
      for (std::size_t k = 0; k < cfg.frames; ++k) {
        RealField I = bank.arm_intensity(
            slm_phases(cfg.slm, cfg.scheme, times[k]), times[k]);
        st.delta[j][k] = std::move(I.v);
      }
    } else {
      ScenarioConfig c = cfg;
      c.L = depths[j];
      ReferenceFrames rf = compute_reference(c, times);
      for (std::size_t k = 0; k < cfg.frames; ++k)
        st.delta[j][k] = std::move(rf.frames[k].v);
    }
    for (const std::vector<double>& f : st.delta[j])
      for (std::size_t i = 0; i < npx; ++i) mean[i] += f[i];
    for (double& x : mean) x /= static_cast<double>(cfg.frames);
    for (std::vector<double>& f : st.delta[j])
      for (std::size_t i = 0; i < npx; ++i) f[i] -= mean[i];
  }
  return st;
}

// Bucket record of an object at an arbitrary depth, computed by the exact
// per-pixel route on the mask's own grid.  t0 records the arrival
// retardation L/c.
inline CurrentSeries sectioning_bucket(const ScenarioConfig& cfg, double L_obj,
                                       const ObjectMask& mask,
                                       const DetectorModel& det) {
  require(cfg.source == SourceKind::slm, errc::invalid_argument,
          "sectioning needs an slm source");
  require(cfg.scheme.kind == Modulation::sinusoidal,
          errc::nondeterministic_source,
          "sectioning needs deterministic modulation");
  SlmModeBank bank(cfg.slm, L_obj, mask.grid);
  std::vector<double> flux(cfg.frames);
  for (std::size_t k = 0; k < cfg.frames; ++k) {
    double t = k * cfg.dt;
    flux[k] = bucket_flux(
        bank.arm_intensity(slm_phases(cfg.slm, cfg.scheme, t), t), mask);
  }
  return to_current(flux, L_obj / speed_of_light, cfg.dt, det);
}

// Correlate one bucket record against every slice of a stack.  Sample k of
// the bucket and frame k of each slice share a modulation epoch; their
// timestamps differ only by the depth retardation, which the alignment check
// tolerates (|offset| < dt/2) and the pairing thereby compensates.  Images
// carry the computed-reference normalization (A1 = one scan cell).
inline std::vector<GhostImage> section(const CurrentSeries& bucket,
                                       const ReferenceStack& st,
                                       std::uint64_t expected_fingerprint = 0,
                                       int blocks = 20) {
  if (expected_fingerprint != 0)
    require(expected_fingerprint == st.fingerprint, errc::fingerprint_mismatch,
            "bucket was recorded against a different schedule");
  require(bucket.v.size() == st.frames, errc::misaligned_series,
          "bucket length does not match the stack");
  require(bucket.dt == st.dt, errc::misaligned_series,
          "bucket sampling does not match the stack");
  require(st.frames >= 4, errc::insufficient_data, "stack too short");
  int B = std::min<std::size_t>(blocks, st.frames / 2);
  require(B >= 2, errc::insufficient_data, "too few frames for error blocks");

  double m2 = 0;
  for (double x : bucket.v) m2 += x;
  m2 /= static_cast<double>(st.frames);

  std::vector<GhostImage> out;
  out.reserve(st.depths.size());
  for (std::size_t j = 0; j < st.depths.size(); ++j) {
    double retard = st.depths[j] / speed_of_light;
    require(std::abs(bucket.t0 - retard) < 0.5 * st.dt, errc::misaligned_series,
            "bucket start time is not a depth retardation of the stack clock");

    const GridSpec& g = st.grids[j];
    std::size_t npx = g.size();
    double A1 = g.pitch * g.pitch;

    std::vector<double> bp(static_cast<std::size_t>(B) * npx, 0.0);
    std::vector<std::size_t> bn(B, 0);
    for (std::size_t k = 0; k < st.frames; ++k) {
      std::size_t b = k * B / st.frames;
      const double* f = st.delta[j][k].data();
      double w = bucket.v[k];
      double* row = bp.data() + b * npx;
      for (std::size_t i = 0; i < npx; ++i) row[i] += f[i] * w;
      bn[b]++;
    }

    GhostImage img;
    img.grid = g;
    img.mode = ImageMode::computational;
    img.dc_block = true;
    img.frames = st.frames;
    img.mean2 = m2;
    img.v.resize(npx);
    img.se.resize(npx);
    img.mean1.assign(npx, 0.0);

    std::vector<double> loo(B);
    for (std::size_t i = 0; i < npx; ++i) {
      double tot = 0;
      for (int b = 0; b < B; ++b) tot += bp[b * npx + i];
      double n = static_cast<double>(st.frames);
      img.v[i] = A1 * tot / n;
      double lm = 0;
      for (int b = 0; b < B; ++b) {
        loo[b] = A1 * (tot - bp[b * npx + i]) / (n - bn[b]);
        lm += loo[b];
      }
      lm /= B;
      double var = 0;
      for (int b = 0; b < B; ++b) var += (loo[b] - lm) * (loo[b] - lm);
      img.se[i] = std::sqrt(var * (B - 1) / B);
    }
    out.push_back(std::move(img));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spot-width metric and depth profiles.
// ---------------------------------------------------------------------------

enum class WidthMethod { gaussian_fit, fwhm };

namespace detail {

// weighted least squares for log v ~ a + b x + c y + d x^2 + e y^2 on pixels
// above the floor; returns {wx, wy} e^{-1} radii
inline bool log_quadratic_widths(const GhostImage& img, double floor_frac,
                                 double& wx, double& wy) {
  const GridSpec& g = img.grid;
  double vmax = 0;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < img.v.size(); ++i)
    if (img.v[i] > vmax) {
      vmax = img.v[i];
      peak = i;
    }
  if (vmax <= 0) return false;
  int px = static_cast<int>(peak) % g.n, py = static_cast<int>(peak) / g.n;
  if (px == 0 || py == 0 || px == g.n - 1 || py == g.n - 1) return false;

  double floor = floor_frac * vmax;
  // scale coordinates to the grid pitch to keep the normal matrix tame
  double s = 1.0 / g.pitch;
  double A[5][6] = {};
  std::size_t used = 0;
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      double v = img.at(ix, iy);
      if (v < floor) continue;
      vec2 r = g.coord(ix, iy);
      double t[5] = {1.0, r.x * s, r.y * s, r.x * r.x * s * s,
                     r.y * r.y * s * s};
      double w = v * v; // log-noise weighting
      double b = std::log(v);
      for (int a = 0; a < 5; ++a) {
        for (int c = 0; c < 5; ++c) A[a][c] += w * t[a] * t[c];
        A[a][5] += w * t[a] * b;
      }
      ++used;
    }
  if (used < 8) return false;

  // gaussian elimination with partial pivoting
  for (int c = 0; c < 5; ++c) {
    int piv = c;
    for (int r = c + 1; r < 5; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    if (std::abs(A[piv][c]) < 1e-30) return false;
    if (piv != c)
      for (int k = 0; k < 6; ++k) std::swap(A[piv][k], A[c][k]);
    for (int r = 0; r < 5; ++r) {
      if (r == c) continue;
      double f = A[r][c] / A[c][c];
      for (int k = c; k < 6; ++k) A[r][k] -= f * A[c][k];
    }
  }
  double d = A[3][5] / A[3][3], e = A[4][5] / A[4][4];
  if (!(d < 0) || !(e < 0)) return false;
  wx = std::sqrt(-1.0 / d) / s;
  wy = std::sqrt(-1.0 / e) / s;
  return true;
}

// half-maximum crossing distance from the peak along one axis
inline bool half_crossing(const GhostImage& img, int px, int py, int sx,
                          int sy, double half, double& dist) {
  const GridSpec& g = img.grid;
  double prev = img.at(px, py);
  for (int step = 1;; ++step) {
    int ix = px + sx * step, iy = py + sy * step;
    if (ix < 0 || iy < 0 || ix >= g.n || iy >= g.n) return false;
    double cur = img.at(ix, iy);
    if (cur <= half) {
      double frac = (prev - half) / (prev - cur);
      dist = (step - 1 + frac) * g.pitch;
      return true;
    }
    prev = cur;
  }
}

} // namespace detail

// e^{-1} radius of the image's dominant spot.  gaussian_fit: weighted
// log-quadratic least squares over pixels above 20% of the peak.  fwhm:
// half-maximum crossings converted by FWHM = 2 sqrt(ln 2) w.  Anisotropy is
// folded into the geometric mean of the axis widths.
inline double psf_width(const GhostImage& img,
                        WidthMethod method = WidthMethod::gaussian_fit) {
  if (method == WidthMethod::gaussian_fit) {
    double wx, wy;
    require(detail::log_quadratic_widths(img, 0.2, wx, wy), errc::no_peak,
            "no concave peak to fit");
    return std::sqrt(wx * wy);
  }
  double vmax = 0;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < img.v.size(); ++i)
    if (img.v[i] > vmax) {
      vmax = img.v[i];
      peak = i;
    }
  require(vmax > 0, errc::no_peak, "image has no positive peak");
  int px = static_cast<int>(peak) % img.grid.n;
  int py = static_cast<int>(peak) / img.grid.n;
  double half = vmax / 2.0;
  double dl, dr, du, dd;
  bool ok = detail::half_crossing(img, px, py, -1, 0, half, dl) &&
            detail::half_crossing(img, px, py, +1, 0, half, dr) &&
            detail::half_crossing(img, px, py, 0, -1, half, dd) &&
            detail::half_crossing(img, px, py, 0, +1, half, du);
  require(ok, errc::no_peak, "half-maximum contour leaves the grid");
  double fx = dl + dr, fy = dd + du;
  return std::sqrt(fx * fy) / (2.0 * std::sqrt(std::log(2.0)));
}

struct DepthProfile {
  std::vector<double> depths;
  std::vector<double> widths;
  double focus_estimate = 0;
};

// Width-vs-depth curve with a parabolic refinement of the focus position
// when the minimum is interior to the scan.
inline DepthProfile depth_profile(const std::vector<GhostImage>& slices,
                                  const std::vector<double>& depths,
                                  WidthMethod method = WidthMethod::gaussian_fit) {
  require(slices.size() == depths.size() && !slices.empty(),
          errc::invalid_argument, "one slice per depth required");
  DepthProfile dp;
  dp.depths = depths;
  dp.widths.reserve(slices.size());
  if (method == WidthMethod::gaussian_fit) {
    // a scan too coarse for the log-quadratic fit falls back to half-maximum
    // crossings, and then for every slice so the widths stay comparable
    for (const GhostImage& s : slices) {
      double wx, wy;
      if (!detail::log_quadratic_widths(s, 0.2, wx, wy)) {
        dp.widths.clear();
        method = WidthMethod::fwhm;
        break;
      }
      dp.widths.push_back(std::sqrt(wx * wy));
    }
  }
  if (dp.widths.empty())
    for (const GhostImage& s : slices) dp.widths.push_back(psf_width(s, method));

  std::size_t j = 0;
  for (std::size_t i = 1; i < dp.widths.size(); ++i)
    if (dp.widths[i] < dp.widths[j]) j = i;
  dp.focus_estimate = depths[j];
  if (j > 0 && j + 1 < dp.widths.size()) {
    double w0 = dp.widths[j - 1], w1 = dp.widths[j], w2 = dp.widths[j + 1];
    double d0 = depths[j - 1], d1 = depths[j], d2 = depths[j + 1];
    double denom = (w0 - 2 * w1 + w2);
    if (denom > 0) {
      // vertex of the parabola through the three bracketing samples
      double off = 0.5 * (w0 - w2) / denom;
      off = std::clamp(off, -1.0, 1.0);
      dp.focus_estimate = d1 + off * (off > 0 ? (d2 - d1) : (d1 - d0));
    }
  }
  return dp;
}

} // namespace gisim

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "gisim/detection.hpp"
#include "gisim/grid.hpp"
#include "gisim/source.hpp"

namespace gisim {

// Closed-form mutual coherence K(r1, r2) = <E1*(r1) E2(r2)> of the two arm
// fields in a given plane, equal times.  Kernels carry a separable
// factorization K = scale * fx(x1,x2) * fy(y1,y2) whenever the physics
// provides one; quadrature paths exploit it.
struct CorrelationKernel {
  std::function<cplx(vec2, vec2)> eval;
  bool separable = false;
  cplx scale{1.0, 0.0};
  std::function<cplx(double, double)> fx, fy;

  double lambda0 = 0; // m
  double L = 0;       // plane distance from the source, m
  double env_radius = 0; // transverse scale of K(r,r)
  double coh_radius = 0; // transverse correlation scale

  cplx operator()(vec2 r1, vec2 r2) const { return eval(r1, r2); }
};

namespace detail {

inline CorrelationKernel from_separable(cplx scale,
                                        std::function<cplx(double, double)> fx,
                                        std::function<cplx(double, double)> fy) {
  CorrelationKernel k;
  k.separable = true;
  k.scale = scale;
  k.fx = std::move(fx);
  k.fy = std::move(fy);
  auto sx = k.fx;
  auto sy = k.fy;
  k.eval = [scale, sx, sy](vec2 r1, vec2 r2) {
    return scale * sx(r1.x, r2.x) * sy(r1.y, r2.y);
  };
  return k;
}

} // namespace detail

// Source-plane coherence of one arm after a 50/50 split of a gaussian-schell
// beam; the factor 1/2 relative to the full beam is included.
inline CorrelationKernel gs_source_corr(const GaussianSchellParams& p) {
  validate(p);
  double a2 = p.a0 * p.a0;
  double r2c = 2.0 * p.rho0 * p.rho0;
  auto f = [a2, r2c](double u1, double u2) {
    double du = u1 - u2;
    return cplx(std::exp(-(u1 * u1 + u2 * u2) / a2 - du * du / r2c), 0.0);
  };
  CorrelationKernel k = detail::from_separable(
      cplx(p.P / (pi * a2), 0.0), f, f);
  k.env_radius = p.a0;
  k.coh_radius = p.rho0;
  return k;
}

// Far-field coherence at distance L.  Valid when the source is deep in its
// far zone, k0 a0 rho0 / (2 L) <= 0.1: intensity radius a_L = 2L/(k0 rho0),
// coherence radius rho_L = 2L/(k0 a0).
inline CorrelationKernel gs_farfield_corr(const GaussianSchellParams& p,
                                          double lambda0, double L) {
  validate(p);
  double k0 = wavenumber(lambda0);
  require(L > 0.0, errc::invalid_argument, "far-field plane needs L > 0");
  double ff = k0 * p.a0 * p.rho0 / (2.0 * L);
  require(ff <= 0.1, errc::far_field_violation,
          "far-field factor k0*a0*rho0/(2L) = " + std::to_string(ff) +
              " exceeds the 0.1 limit");

  double aL = 2.0 * L / (k0 * p.rho0);
  double rL = 2.0 * L / (k0 * p.a0);
  double aL2 = aL * aL;
  double rL2c = 2.0 * rL * rL;
  double chirp = k0 / (2.0 * L);
  auto f = [aL2, rL2c, chirp](double u1, double u2) {
    double du = u1 - u2;
    double mag = std::exp(-(u1 * u1 + u2 * u2) / aL2 - du * du / rL2c);
    return std::polar(mag, chirp * (u2 * u2 - u1 * u1));
  };
  CorrelationKernel k = detail::from_separable(
      cplx(p.P / (pi * aL2), 0.0), f, f);
  k.lambda0 = lambda0;
  k.L = L;
  k.env_radius = aL;
  k.coh_radius = rL;
  return k;
}

namespace detail {

// sin(N a)/sin(a) with the removable singularity handled
inline double dirichlet_ratio(double a, double N) {
  double s = std::sin(a);
  if (std::abs(s) < 1e-12) return N * std::cos(N * a) / std::cos(a);
  return std::sin(N * a) / s;
}

inline double sinc(double x) {
  if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
  return std::sin(x) / x;
}

} // namespace detail

// Far-field coherence of the phase-randomized slm pupil at distance L,
// valid when the phase across one pixel at the pupil edge is small,
// k0 d D / L <= 0.1.  Per axis:
//   sinc(k0 d u1 / 2L) sinc(k0 d u2 / 2L) *
//   sin(k0 D (u1-u2)/2L) / sin(k0 d (u1-u2)/2L)
// which tends to D/d on the diagonal.
inline CorrelationKernel slm_farfield_corr(const SlmParams& s, double L) {
  validate(s);
  require(L > 0.0, errc::invalid_argument, "far-field plane needs L > 0");
  double k0 = wavenumber(s.lambda0);
  double D = s.D();
  double ff = k0 * s.d * D / L;
  require(ff <= 0.1, errc::far_field_violation,
          "far-field factor k0*d*D/L = " + std::to_string(ff) +
              " exceeds the 0.1 limit");

  double cd = k0 * s.d / (2.0 * L);
  double cD = k0 * D / (2.0 * L);
  double N = D / s.d;
  double chirp = k0 / (2.0 * L);
  auto f = [cd, cD, N, chirp](double u1, double u2) {
    double mag = detail::sinc(cd * u1) * detail::sinc(cd * u2) *
                 detail::dirichlet_ratio(cd * (u1 - u2), N);
    return std::polar(mag, chirp * (u2 * u2 - u1 * u1));
  };
  double pref = s.P / 2.0 * std::pow(s.d * s.d / (D * s.lambda0 * L), 2.0);
  CorrelationKernel k = detail::from_separable(cplx(pref, 0.0), f, f);
  k.lambda0 = s.lambda0;
  k.L = L;
  k.env_radius = s.lambda0 * L / s.d;
  k.coh_radius = s.lambda0 * L / D;
  return k;
}

// Nonempty when the beam is only marginally in its far zone; the asymptotic
// form then starts to drift from the propagated truth.
inline std::string farfield_warning(const GaussianSchellParams& p,
                                    double lambda0, double L) {
  double ff = wavenumber(lambda0) * p.a0 * p.rho0 / (2.0 * L);
  if (ff > 0.03)
    return "far-field factor k0*a0*rho0/(2L) = " + std::to_string(ff) +
           " exceeds 0.03; the asymptotic coherence form loses accuracy";
  return {};
}

// Gaussian-moment prediction for the photocurrent fluctuation correlation:
//   <dI1(r1,t1) dI2(r2,t2)> = |K(r1,r2)|^2 |R(t2-t1)|^2 |T(r2)|^2
inline double fluct_corr_prediction(const CorrelationKernel& k, double T0,
                                    const ObjectMask& mask, vec2 r1, vec2 r2,
                                    double t1 = 0.0, double t2 = 0.0) {
  int ix, iy;
  mask.grid.nearest(r2, ix, iy);
  double R = std::exp(-std::abs(t2 - t1) / T0);
  return std::norm(k(r1, r2)) * R * R * mask.t2(ix, iy);
}

// Coherence-radius growth under defocus dL off the reference plane
inline double rho_L_prime(double rho_L, double dL, double lambda0) {
  double k0 = wavenumber(lambda0);
  double u = dL / (k0 * rho_L * rho_L);
  return rho_L * std::sqrt(1.0 + u * u);
}

struct DefocusOptions {
  double window = 0;     // transverse integration window, 0 = 4 * env_radius
  double fine_scale = 0; // smallest kernel feature, 0 = coh_radius
};

// Coherence between the reference plane and a plane displaced by dL: r1
// stays on the reference plane, r2 lives at L + dL, where the object sits.
//   K''(r1, r2) = Int dr K(r1, r) e^{-i k0 r^2 / 2L} (k0 / (i 2 pi dL))
//                 e^{i k0 (dL + |r2 - r|^2 / (2 dL))} e^{i k0 r2^2 / 2(L+dL)}
// For a kernel tagged with a propagation distance L > 0, the deterministic
// wavefront curvature it carries is factored out before the step and the
// curvature of the displaced plane is attached afterwards, so the defocus
// acts on the speckle pattern alone; that is what degrades the point spread
// by sqrt(1 + (dL / k0 rho^2)^2).  A kernel tagged L = 0 is collimated and
// propagates verbatim.  Evaluated by midpoint quadrature, separably when
// the base kernel allows.  The quadrature pitch resolves both the kernel's
// finest transverse feature and the defocus chirp at the window edge.
inline CorrelationKernel defocused_corr(const CorrelationKernel& k, double dL,
                                        DefocusOptions opt = {}) {
  if (dL == 0.0) return k;
  require(k.lambda0 > 0.0, errc::invalid_argument,
          "defocus requires a propagation-tagged kernel");
  double W = opt.window > 0 ? opt.window : 4.0 * k.env_radius;
  double fine = opt.fine_scale > 0 ? opt.fine_scale : k.coh_radius;
  require(W > 0.0 && fine > 0.0, errc::invalid_argument,
          "defocus quadrature needs window and feature scales");

  double k0 = wavenumber(k.lambda0);
  double chirp_scale = k.lambda0 * std::abs(dL) / (4.0 * W);
  double h = std::min(fine, chirp_scale) / 4.0;
  // the factored-out reference curvature is a chirp of its own
  if (k.L > 0.0) h = std::min(h, k.lambda0 * k.L / (16.0 * W));
  int nq = static_cast<int>(std::ceil(W / h));
  require(nq <= 2000000, errc::size_exceeded, "defocus quadrature too large");

  std::vector<double> nodes(nq);
  for (int j = 0; j < nq; ++j) nodes[j] = -W / 2.0 + (j + 0.5) * (W / nq);
  double hq = W / nq;

  // per-axis square root of the forward defocus kernel prefactor; the
  // unconjugated field sits in the second slot, so the step is forward there
  double mag = std::sqrt(k0 / (2.0 * pi * std::abs(dL)));
  double sgn = dL > 0 ? 1.0 : -1.0;
  cplx sqrt_pref = std::polar(mag, -sgn * pi / 4.0 + k0 * dL / 2.0);
  double cchirp = k0 / (2.0 * dL);
  // per-axis curvature factored out of the base kernel and re-attached for
  // the displaced plane; zero for an untagged (collimated) kernel
  double cflat = k.L > 0.0 ? k0 / (2.0 * k.L) : 0.0;
  double cnew = k.L > 0.0 ? k0 / (2.0 * (k.L + dL)) : 0.0;

  CorrelationKernel out;
  out.lambda0 = k.lambda0;
  out.L = k.L + dL;
  out.env_radius = k.env_radius;
  out.coh_radius = rho_L_prime(k.coh_radius, dL, k.lambda0);

  if (k.separable) {
    auto lift = [nodes, hq, sqrt_pref, cchirp, cflat, cnew](
                    const std::function<cplx(double, double)>& f) {
      return [nodes, hq, sqrt_pref, cchirp, cflat, cnew,
              f](double u1, double u2) {
        cplx acc{};
        for (double x : nodes) {
          double du = u2 - x;
          acc += f(u1, x) *
                 std::polar(1.0, cchirp * du * du - cflat * x * x);
        }
        return acc * sqrt_pref * hq * std::polar(1.0, cnew * u2 * u2);
      };
    };
    out.separable = true;
    out.scale = k.scale;
    out.fx = lift(k.fx);
    out.fy = lift(k.fy);
    auto sx = out.fx;
    auto sy = out.fy;
    cplx sc = out.scale;
    out.eval = [sc, sx, sy](vec2 r1, vec2 r2) {
      return sc * sx(r1.x, r2.x) * sy(r1.y, r2.y);
    };
    return out;
  }

  auto base = k.eval;
  cplx pref = sqrt_pref * sqrt_pref;
  out.eval = [nodes, hq, pref, cchirp, cflat, cnew, base](vec2 r1, vec2 r2) {
    cplx acc{};
    for (double y : nodes) {
      double dy = r2.y - y;
      cplx phy = std::polar(1.0, cchirp * dy * dy - cflat * y * y);
      for (double x : nodes) {
        double dx = r2.x - x;
        acc += base(r1, {x, y}) * phy *
               std::polar(1.0, cchirp * dx * dx - cflat * x * x);
      }
    }
    double r2sq = r2.x * r2.x + r2.y * r2.y;
    return acc * pref * (hq * hq) * std::polar(1.0, cnew * r2sq);
  };
  return out;
}

// ---------------------------------------------------------------------------
// Sampled-coherence estimation from frame pairs, with block-jackknife errors.
// ---------------------------------------------------------------------------

struct CorrProbe {
  vec2 r1, r2;
};

struct CorrEstimate {
  cplx mean{};
  double se_re = 0, se_im = 0;
  std::size_t frames = 0;
};

// Streaming core: suppliers are called once per frame, arm1 first, so a
// generating supplier can pair with one that returns the same buffer when the
// two arms are copies of a single field.
inline std::vector<CorrEstimate>
estimate_corr_stream(std::size_t N,
                     const std::function<const ComplexField&(std::size_t)>& arm1,
                     const std::function<const ComplexField&(std::size_t)>& arm2,
                     const std::vector<CorrProbe>& probes, int blocks = 20) {
  require(N >= 4, errc::insufficient_data, "need at least 4 frames");
  int B = std::min<std::size_t>(blocks, N);
  require(B >= 2, errc::insufficient_data, "need at least 2 jackknife blocks");

  struct Loc {
    int i1x, i1y, i2x, i2y;
  };
  std::vector<Loc> loc(probes.size());
  std::vector<std::vector<cplx>> bsum(probes.size(), std::vector<cplx>(B));
  std::vector<std::size_t> bcount(B, 0);
  GridSpec g;
  for (std::size_t k = 0; k < N; ++k) {
    const ComplexField& f1 = arm1(k);
    const ComplexField& f2 = arm2(k);
    if (k == 0) {
      g = f1.grid;
      for (std::size_t p = 0; p < probes.size(); ++p) {
        g.nearest(probes[p].r1, loc[p].i1x, loc[p].i1y);
        g.nearest(probes[p].r2, loc[p].i2x, loc[p].i2y);
      }
    }
    require(f1.grid == g && f2.grid == g, errc::grid_mismatch,
            "all frames must share one grid");
    int b = static_cast<int>(k * B / N);
    bcount[b]++;
    for (std::size_t p = 0; p < probes.size(); ++p) {
      cplx z = std::conj(f1.at(loc[p].i1x, loc[p].i1y)) *
               f2.at(loc[p].i2x, loc[p].i2y);
      bsum[p][b] += z;
    }
  }

  std::vector<CorrEstimate> out(probes.size());
  for (std::size_t p = 0; p < probes.size(); ++p) {
    cplx total{};
    for (int b = 0; b < B; ++b) total += bsum[p][b];
    cplx mean = total / static_cast<double>(N);

    // leave-one-block-out means
    std::vector<cplx> loo(B);
    cplx loo_mean{};
    for (int b = 0; b < B; ++b) {
      loo[b] = (total - bsum[p][b]) / static_cast<double>(N - bcount[b]);
      loo_mean += loo[b];
    }
    loo_mean /= static_cast<double>(B);
    double vr = 0, vi = 0;
    for (int b = 0; b < B; ++b) {
      double dr = loo[b].real() - loo_mean.real();
      double di = loo[b].imag() - loo_mean.imag();
      vr += dr * dr;
      vi += di * di;
    }
    double f = static_cast<double>(B - 1) / B;
    out[p] = CorrEstimate{mean, std::sqrt(f * vr), std::sqrt(f * vi), N};
  }
  return out;
}

inline std::vector<CorrEstimate>
estimate_corr(const std::vector<ComplexField>& arm1,
              const std::vector<ComplexField>& arm2,
              const std::vector<CorrProbe>& probes, int blocks = 20) {
  require(arm1.size() == arm2.size(), errc::misaligned_series,
          "arm frame lists differ in length");
  return estimate_corr_stream(
      arm1.size(),
      [&](std::size_t k) -> const ComplexField& { return arm1[k]; },
      [&](std::size_t k) -> const ComplexField& { return arm2[k]; }, probes,
      blocks);
}

} // namespace gisim

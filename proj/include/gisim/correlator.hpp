#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "gisim/coherence.hpp"
#include "gisim/detection.hpp"
#include "gisim/propagation.hpp"
#include "gisim/source.hpp"

namespace gisim {

// Time-averaged product of two photocurrent records; with the DC block the
// means are removed first, <(i1 - <i1>)(i2 - <i2>)>.
inline double correlate(const CurrentSeries& i1, const CurrentSeries& i2,
                        bool dc_block) {
  require(!i1.v.empty(), errc::misaligned_series, "empty series");
  require(i1.v.size() == i2.v.size(), errc::misaligned_series,
          "series lengths differ");
  require(i1.dt == i2.dt, errc::misaligned_series, "sample spacings differ");
  require(std::abs(i1.t0 - i2.t0) <= 1e-6 * i1.dt, errc::misaligned_series,
          "series start times differ");
  double p = 0, m1 = 0, m2 = 0;
  for (std::size_t k = 0; k < i1.v.size(); ++k) {
    p += i1.v[k] * i2.v[k];
    m1 += i1.v[k];
    m2 += i2.v[k];
  }
  double n = static_cast<double>(i1.v.size());
  double off = p / n;
  if (!dc_block) return off;
  return off - (m1 / n) * (m2 / n);
}

enum class ImageMode { pseudothermal, slm, computational, analytic };

// Correlation image over the scan plane, with per-pixel jackknife errors and
// the first-moment diagnostics needed to judge background levels.
struct GhostImage {
  GridSpec grid;
  ImageMode mode = ImageMode::analytic;
  bool dc_block = true;
  std::size_t frames = 0;
  std::vector<double> v;     // C(r1)
  std::vector<double> se;    // standard error of v
  std::vector<double> mean1; // <i1(r1)>
  double mean2 = 0;          // <i2>
  double background_estimate = 0; // <i1(argmax)><i2>, meaningful without DC block

  double at(int ix, int iy) const { return v[grid.idx(ix, iy)]; }
  double se_at(int ix, int iy) const { return se[grid.idx(ix, iy)]; }
};

enum class SourceKind { gaussian_schell, slm };

// One imaging run: source description, geometry, object, detectors, and the
// averaging schedule.  The mask doubles as the scan-plane definition; its
// grid must be the one the single-transform propagation lands on.
struct ScenarioConfig {
  SourceKind source = SourceKind::gaussian_schell;
  GaussianSchellParams gs{};
  TemporalMode temporal = TemporalMode::independent;
  SlmParams slm{};
  ModulationScheme scheme{};

  double lambda0 = 1.0e-6; // m
  double L = 10.0;         // m

  int n = 256;               // samples per axis in the source plane
  double source_pitch = 0.0; // m; 0 picks the coarsest pitch the source allows

  ObjectMask mask;
  DetectorModel det1{}, det2{};

  std::size_t frames = 10000;
  double dt = 1.0e-3; // s between frames
  bool dc_block = true;
  std::uint64_t seed = 1;
  int blocks = 20; // jackknife blocks
};

inline double default_source_pitch(const ScenarioConfig& cfg) {
  if (cfg.source == SourceKind::gaussian_schell) return cfg.gs.rho0 / 3.0;
  return cfg.slm.d / 4.0;
}

inline GridSpec source_grid(const ScenarioConfig& cfg) {
  double p = cfg.source_pitch > 0 ? cfg.source_pitch : default_source_pitch(cfg);
  // offset the modulator lattice by half a cell so that pixel edges fall
  // between samples: the sampled staircase is then the exact pupil instead
  // of a half-cell translate of it
  if (cfg.source == SourceKind::slm) return make_grid(cfg.n, p, vec2{p / 2, p / 2});
  return make_grid(cfg.n, p);
}

inline GridSpec scan_grid(const ScenarioConfig& cfg) {
  return plan_fresnel(source_grid(cfg), cfg.lambda0, cfg.L).out;
}

// Everything except the object: source, geometry, detectors, schedule.
inline void validate_source_setup(const ScenarioConfig& cfg) {
  require(cfg.lambda0 > 0 && cfg.L > 0, errc::invalid_argument,
          "wavelength and distance must be positive");
  require(cfg.frames >= 100, errc::invalid_argument,
          "need at least 100 frames for a meaningful average");
  require(cfg.dt > 0, errc::invalid_argument, "frame spacing must be positive");
  require(cfg.blocks >= 2, errc::invalid_argument,
          "need at least 2 jackknife blocks");
  if (cfg.source == SourceKind::gaussian_schell) {
    validate(cfg.gs);
  } else {
    validate(cfg.slm);
    require(cfg.slm.lambda0 == cfg.lambda0, errc::invalid_argument,
            "scenario and slm wavelengths disagree");
    validate_scheme(cfg.slm, cfg.scheme);
  }
  validate(cfg.det1);
  validate(cfg.det2);
}

inline void validate_scenario(const ScenarioConfig& cfg) {
  validate_source_setup(cfg);
  require(cfg.mask.grid == scan_grid(cfg), errc::grid_mismatch,
          "mask must live on the scan grid the propagation lands on");
}

namespace detail {

struct AccumulateOptions {
  ImageMode mode;
  bool dc_block;
  bool arm1_physical; // false: arm 1 is a computed reference, never noisy
};

// Shared two-detector correlation engine.  Per frame: one arm-intensity
// field serves both arms (the split fields are identical), the bucket is
// integrated through the mask, detector chains are applied, and running
// products accumulate per scan pixel in a fixed order so reruns are
// bit-identical.  Block partial sums feed the jackknife errors.
inline GhostImage accumulate_image(
    const ScenarioConfig& cfg, const GridSpec& scan,
    const std::function<RealField(std::size_t)>& arm_intensity,
    const AccumulateOptions& opt) {
  require(cfg.mask.grid == scan, errc::grid_mismatch,
          "mask must live on the scan grid");
  if (!opt.arm1_physical)
    require(!cfg.det1.shot_noise, errc::invalid_argument,
            "a computed reference carries no shot noise");

  const std::size_t npx = scan.size();
  const double cell = scan.pitch * scan.pitch;
  double A1 = cfg.det1.A1 > 0 ? cfg.det1.A1 : cell;
  require(A1 <= cell * (1.0 + 1e-12), errc::invalid_argument,
          "pinhole larger than one scan cell is not point-like");

  const int taps1 = impulse_taps(cfg.det1.h, cfg.dt);
  const int taps2 = impulse_taps(cfg.det2.h, cfg.dt);
  const int warm = std::max(taps1, taps2) - 1;
  require(cfg.frames > static_cast<std::size_t>(warm) + 10,
          errc::insufficient_data, "impulse response longer than the record");
  const std::size_t nw = cfg.frames - warm;
  const int B = std::min<std::size_t>(cfg.blocks, nw / 2);
  require(B >= 2, errc::insufficient_data, "too few frames for error blocks");

  // ring buffers implementing the causal boxcar on both arms
  std::vector<std::vector<double>> ring1(taps1, std::vector<double>(npx, 0.0));
  std::vector<double> rs1(npx, 0.0);
  std::vector<double> ring2(taps2, 0.0);
  double rs2 = 0.0;

  std::vector<double> bp(static_cast<std::size_t>(B) * npx, 0.0); // sum i1*i2
  std::vector<double> bu(static_cast<std::size_t>(B) * npx, 0.0); // sum i1
  std::vector<double> bv(B, 0.0);                                 // sum i2
  std::vector<std::size_t> bn(B, 0);

  std::vector<double> cur1(npx);
  for (std::size_t k = 0; k < cfg.frames; ++k) {
    RealField I = arm_intensity(k);
    require(I.grid == scan, errc::grid_mismatch,
            "frame landed on an unexpected grid");

    for (std::size_t i = 0; i < npx; ++i)
      cur1[i] = cfg.det1.q * (cfg.det1.eta * (A1 * I.v[i]));
    if (opt.arm1_physical && cfg.det1.shot_noise) {
      Rng rng(stream_seed(*cfg.det1.noise_seed, "det1-noise", k));
      double bin = cfg.det1.dt;
      for (std::size_t i = 0; i < npx; ++i) {
        double mean = cfg.det1.eta * (A1 * I.v[i]) * bin;
        cur1[i] = cfg.det1.q * rng.poisson(mean) / bin;
      }
    }

    double cur2 = cfg.det2.q * (cfg.det2.eta * bucket_flux(I, cfg.mask));
    if (cfg.det2.shot_noise) {
      Rng rng(stream_seed(*cfg.det2.noise_seed, "det2-noise", k));
      double bin = cfg.det2.dt;
      double mean = cfg.det2.eta * bucket_flux(I, cfg.mask) * bin;
      cur2 = cfg.det2.q * rng.poisson(mean) / bin;
    }

    std::size_t slot1 = k % taps1;
    for (std::size_t i = 0; i < npx; ++i) {
      rs1[i] += cur1[i] - ring1[slot1][i];
      ring1[slot1][i] = cur1[i];
    }
    std::size_t slot2 = k % taps2;
    rs2 += cur2 - ring2[slot2];
    ring2[slot2] = cur2;

    if (k < static_cast<std::size_t>(warm)) continue;
    std::size_t kk = k - warm;
    std::size_t b = kk * B / nw;
    double s2 = rs2 / taps2;
    double* pb = bp.data() + b * npx;
    double* ub = bu.data() + b * npx;
    for (std::size_t i = 0; i < npx; ++i) {
      double s1 = rs1[i] / taps1;
      pb[i] += s1 * s2;
      ub[i] += s1;
    }
    bv[b] += s2;
    bn[b]++;
  }

  GhostImage img;
  img.grid = scan;
  img.mode = opt.mode;
  img.dc_block = opt.dc_block;
  img.frames = cfg.frames;
  img.v.resize(npx);
  img.se.resize(npx);
  img.mean1.resize(npx);

  double vtot = 0;
  std::size_t ntot = 0;
  for (int b = 0; b < B; ++b) {
    vtot += bv[b];
    ntot += bn[b];
  }
  img.mean2 = vtot / ntot;

  std::vector<double> loo(B);
  for (std::size_t i = 0; i < npx; ++i) {
    double ptot = 0, utot = 0;
    for (int b = 0; b < B; ++b) {
      ptot += bp[b * npx + i];
      utot += bu[b * npx + i];
    }
    double n = static_cast<double>(ntot);
    img.mean1[i] = utot / n;
    double c = ptot / n;
    if (opt.dc_block) c -= (utot / n) * (vtot / n);
    img.v[i] = c;

    double lm = 0;
    for (int b = 0; b < B; ++b) {
      double m = static_cast<double>(ntot - bn[b]);
      double cb = (ptot - bp[b * npx + i]) / m;
      if (opt.dc_block)
        cb -= ((utot - bu[b * npx + i]) / m) * ((vtot - bv[b]) / m);
      loo[b] = cb;
      lm += cb;
    }
    lm /= B;
    double var = 0;
    for (int b = 0; b < B; ++b) var += (loo[b] - lm) * (loo[b] - lm);
    img.se[i] = std::sqrt(var * (B - 1) / B);
  }

  if (!opt.dc_block) {
    std::size_t peak = 0;
    for (std::size_t i = 1; i < npx; ++i)
      if (img.v[i] > img.v[peak]) peak = i;
    img.background_estimate = img.mean1[peak] * img.mean2;
  }
  return img;
}

} // namespace detail

// Two-detector run with a pseudothermal (gaussian-schell) source: every scan
// pixel plays the role of the movable pinhole against one shared bucket
// record.
inline GhostImage run_pseudothermal(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  require(cfg.source == SourceKind::gaussian_schell, errc::invalid_argument,
          "pseudothermal run needs a gaussian-schell source");
  GridSpec src = source_grid(cfg);
  GridSpec scan = scan_grid(cfg);
  GsEnsemble ens(cfg.gs, src, stream_seed(cfg.seed, "source", 0),
                 cfg.temporal, cfg.dt);
  auto supply = [&](std::size_t) {
    ComplexField e = fresnel_propagate(ens.next(), cfg.lambda0, cfg.L);
    RealField I = intensity(e);
    for (double& x : I.v) x *= 0.5; // each arm carries half the source flux
    return I;
  };
  return detail::accumulate_image(
      cfg, scan, supply,
      {ImageMode::pseudothermal, cfg.dc_block, /*arm1_physical=*/true});
}

namespace detail {

inline std::function<RealField(std::size_t)>
slm_arm_supplier(const ScenarioConfig& cfg, const GridSpec& src,
                 std::shared_ptr<SlmPhaseProcess> proc) {
  return [&cfg, src, proc](std::size_t k) {
    double t = k * cfg.dt;
    ComplexField e0 = slm_field(cfg.slm, proc->phases_at(t), src, t);
    ComplexField e = fresnel_propagate(e0, cfg.lambda0, cfg.L);
    RealField I = intensity(e);
    for (double& x : I.v) x *= 0.5;
    return I;
  };
}

} // namespace detail

// Two-detector run with the phase-modulated pixel source; frames sample the
// modulation at t = k dt, so time averaging stands in for the ensemble.
inline GhostImage run_slm(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  require(cfg.source == SourceKind::slm, errc::invalid_argument,
          "slm run needs an slm source");
  GridSpec src = source_grid(cfg);
  GridSpec scan = scan_grid(cfg);
  auto proc = std::make_shared<SlmPhaseProcess>(cfg.slm, cfg.scheme);
  return detail::accumulate_image(
      cfg, scan, detail::slm_arm_supplier(cfg, src, proc),
      {ImageMode::slm, cfg.dc_block, /*arm1_physical=*/true});
}

// Deterministic reference intensities at the requested times, plus their
// time mean.  Matches the arm-1 physical intensities of run_slm bit for bit
// when evaluated at the same times.
struct ReferenceFrames {
  std::vector<RealField> frames;
  RealField mean;

  RealField delta(std::size_t k) const {
    RealField d = frames[k];
    for (std::size_t i = 0; i < d.v.size(); ++i) d.v[i] -= mean.v[i];
    return d;
  }
};

inline ReferenceFrames compute_reference(const ScenarioConfig& cfg,
                                         const std::vector<double>& times) {
  validate_source_setup(cfg);
  require(cfg.source == SourceKind::slm, errc::invalid_argument,
          "reference computation needs an slm source");
  require(cfg.scheme.kind == Modulation::sinusoidal,
          errc::nondeterministic_source,
          "reference computation needs deterministic modulation");
  require(!times.empty(), errc::invalid_argument, "no reference times given");
  GridSpec src = source_grid(cfg);
  ReferenceFrames out;
  out.frames.reserve(times.size());
  for (double t : times) {
    ComplexField e0 = slm_field(cfg.slm, slm_phases(cfg.slm, cfg.scheme, t),
                                src, t);
    ComplexField e = fresnel_propagate(e0, cfg.lambda0, cfg.L);
    RealField I = intensity(e);
    for (double& x : I.v) x *= 0.5;
    out.frames.push_back(std::move(I));
  }
  out.mean = RealField(out.frames.front().grid, 0.0);
  for (const RealField& f : out.frames)
    for (std::size_t i = 0; i < out.mean.v.size(); ++i)
      out.mean.v[i] += f.v[i];
  for (double& x : out.mean.v) x /= static_cast<double>(out.frames.size());
  return out;
}

// Computational configuration: only the bucket detector is physical; the
// reference is the computed arm intensity, correlated mean-subtracted, so no
// DC block is needed.  With a noiseless instantaneous detector 1 this is the
// same arithmetic run_slm performs with the DC block on.
inline GhostImage run_computational(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  require(cfg.source == SourceKind::slm, errc::invalid_argument,
          "computational run needs an slm source");
  require(cfg.scheme.kind == Modulation::sinusoidal,
          errc::nondeterministic_source,
          "computational run needs deterministic modulation");
  GridSpec src = source_grid(cfg);
  GridSpec scan = scan_grid(cfg);
  auto proc = std::make_shared<SlmPhaseProcess>(cfg.slm, cfg.scheme);
  return detail::accumulate_image(
      cfg, scan, detail::slm_arm_supplier(cfg, src, proc),
      {ImageMode::computational, /*dc_block=*/true, /*arm1_physical=*/false});
}

// Analytic image oracle: background term (unless DC-blocked) plus the
// kernel-squared convolution of the object,
//   C(r1) = <i1(r1)><i2> + g1 g2 Int |K(r1,r2)|^2 |T(r2)|^2 dr2.
inline GhostImage predicted_image(const CorrelationKernel& k,
                                  const ObjectMask& mask,
                                  const DetectorModel& det1,
                                  const DetectorModel& det2, bool dc_block) {
  const GridSpec& g = mask.grid;
  const std::size_t npx = g.size();
  const double cell = g.pitch * g.pitch;
  double A1 = det1.A1 > 0 ? det1.A1 : cell;
  double gain1 = det1.q * det1.eta * A1;
  double gain2 = det2.q * det2.eta;

  struct Src {
    int ix, iy;
    double w; // |T|^2 * cell
  };
  std::vector<Src> support;
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      double w = mask.t2(ix, iy);
      if (w > 0) support.push_back({ix, iy, w * cell});
    }

  GhostImage img;
  img.grid = g;
  img.mode = ImageMode::analytic;
  img.dc_block = dc_block;
  img.v.assign(npx, 0.0);
  img.se.assign(npx, 0.0);
  img.mean1.assign(npx, 0.0);

  double gg = gain1 * gain2;
  if (k.separable && !support.empty()) {
    // per-axis magnitude tables over the support columns and rows
    std::vector<int> cols, rows;
    std::vector<int> colof(g.n, -1), rowof(g.n, -1);
    for (const Src& s : support) {
      if (colof[s.ix] < 0) {
        colof[s.ix] = static_cast<int>(cols.size());
        cols.push_back(s.ix);
      }
      if (rowof[s.iy] < 0) {
        rowof[s.iy] = static_cast<int>(rows.size());
        rows.push_back(s.iy);
      }
    }
    std::vector<double> fx(g.n * cols.size());
    std::vector<double> fy(g.n * rows.size());
    for (int i = 0; i < g.n; ++i) {
      double x1 = g.coord_x(i);
      for (std::size_t c = 0; c < cols.size(); ++c)
        fx[i * cols.size() + c] = std::norm(k.fx(x1, g.coord_x(cols[c])));
      double y1 = g.coord_y(i);
      for (std::size_t r = 0; r < rows.size(); ++r)
        fy[i * rows.size() + r] = std::norm(k.fy(y1, g.coord_y(rows[r])));
    }
    double s2 = std::norm(k.scale);
    for (int iy = 0; iy < g.n; ++iy)
      for (int ix = 0; ix < g.n; ++ix) {
        double acc = 0;
        for (const Src& s : support)
          acc += fx[ix * cols.size() + colof[s.ix]] *
                 fy[iy * rows.size() + rowof[s.iy]] * s.w;
        img.v[g.idx(ix, iy)] = gg * s2 * acc;
      }
  } else {
    for (int iy = 0; iy < g.n; ++iy)
      for (int ix = 0; ix < g.n; ++ix) {
        vec2 r1 = g.coord(ix, iy);
        double acc = 0;
        for (const Src& s : support)
          acc += std::norm(k(r1, g.coord(s.ix, s.iy))) * s.w;
        img.v[g.idx(ix, iy)] = gg * acc;
      }
  }

  if (!dc_block) {
    double flux2 = 0;
    for (const Src& s : support) {
      vec2 r2 = g.coord(s.ix, s.iy);
      flux2 += k(r2, r2).real() * s.w;
    }
    img.mean2 = gain2 * flux2;
    for (int iy = 0; iy < g.n; ++iy)
      for (int ix = 0; ix < g.n; ++ix) {
        vec2 r1 = g.coord(ix, iy);
        std::size_t i = g.idx(ix, iy);
        img.mean1[i] = gain1 * k(r1, r1).real();
        img.v[i] += img.mean1[i] * img.mean2;
      }
    std::size_t peak = 0;
    for (std::size_t i = 1; i < npx; ++i)
      if (img.v[i] > img.v[peak]) peak = i;
    img.background_estimate = img.mean1[peak] * img.mean2;
  }
  return img;
}

inline GhostImage predicted_image(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  CorrelationKernel k =
      cfg.source == SourceKind::gaussian_schell
          ? gs_farfield_corr(cfg.gs, cfg.lambda0, cfg.L)
          : slm_farfield_corr(cfg.slm, cfg.L);
  return predicted_image(k, cfg.mask, cfg.det1, cfg.det2, cfg.dc_block);
}

} // namespace gisim

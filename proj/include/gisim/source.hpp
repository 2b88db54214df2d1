#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "gisim/fft.hpp"
#include "gisim/grid.hpp"
#include "gisim/rng.hpp"

namespace gisim {

// ---------------------------------------------------------------------------
// Gaussian-Schell pseudothermal source.
//
// Frames are samples of a zero-mean circular complex gaussian field with
//   <E*(r1) E(r2)> = (2P / (pi a0^2)) exp(-(|r1|^2+|r2|^2)/a0^2)
//                                    exp(-|r1-r2|^2 / (2 rho0^2)),
// i.e. intensity radius a0, coherence radius rho0, total power P.
// ---------------------------------------------------------------------------

struct GaussianSchellParams {
  double P = 0;    // photons/s across the full beam
  double a0 = 0;   // e^-2 intensity radius, m
  double rho0 = 0; // coherence radius, m
  double T0 = 0;   // coherence time, s
};

inline void validate(const GaussianSchellParams& p) {
  require(p.P > 0 && p.a0 > 0 && p.rho0 > 0 && p.T0 > 0,
          errc::invalid_argument, "gaussian-schell parameters must be positive");
  require(p.rho0 <= p.a0 / 5.0, errc::invalid_argument,
          "source must be quasi-homogeneous (rho0 <= a0/5)");
}

inline std::string validation_warning(const GaussianSchellParams& p) {
  if (p.rho0 > p.a0 / 10.0)
    return "a0/rho0 below 10; speckle statistics will carry envelope bias";
  return {};
}

// R(tau): normalized temporal correlation of the source phasors
inline double temporal_R(double tau, double T0) {
  require(T0 > 0.0, errc::invalid_argument, "coherence time must be positive");
  return std::exp(-std::abs(tau) / T0);
}

namespace detail {

// Stationary unit-variance speckle is synthesized spectrally: white complex
// gaussian noise shaped by sqrt of the DFT of the (torus-wrapped) coherence
// function, then transformed back.  The shaping table depends only on
// (n, pitch, rho0) and is cached.
inline std::shared_ptr<const std::vector<double>>
speckle_filter(int n, double pitch, double rho0) {
  static std::mutex mu;
  static std::map<std::tuple<int, double, double>,
                  std::shared_ptr<const std::vector<double>>>
      cache;
  std::lock_guard<std::mutex> lk(mu);
  auto key = std::make_tuple(n, pitch, rho0);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  std::vector<cplx> c(static_cast<std::size_t>(n) * n);
  for (int jy = 0; jy < n; ++jy) {
    double dy = std::min(jy, n - jy) * pitch;
    for (int jx = 0; jx < n; ++jx) {
      double dx = std::min(jx, n - jx) * pitch;
      c[static_cast<std::size_t>(jy) * n + jx] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * rho0 * rho0));
    }
  }
  dft2(c, n, -1);
  auto filt = std::make_shared<std::vector<double>>(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    (*filt)[i] = std::sqrt(std::max(0.0, c[i].real()));
  auto shared = std::shared_ptr<const std::vector<double>>(filt);
  cache.emplace(key, shared);
  return shared;
}

inline void check_gs_grid(const GaussianSchellParams& p, const GridSpec& g) {
  require(g.pitch <= p.rho0 / 3.0 * (1.0 + 1e-12), errc::sampling_violation,
          "pitch must resolve the coherence cell (pitch <= rho0/3)");
  require(g.extent() >= 4.0 * p.a0 * (1.0 - 1e-12), errc::sampling_violation,
          "grid extent must cover the beam (extent >= 4 a0)");
}

// white tensor -> one speckle frame
inline ComplexField speckle_from_white(const GaussianSchellParams& p,
                                       const GridSpec& g,
                                       const std::vector<cplx>& white,
                                       double timestamp) {
  auto filt = speckle_filter(g.n, g.pitch, p.rho0);
  ComplexField f(g, timestamp);
  for (std::size_t i = 0; i < f.v.size(); ++i) f.v[i] = (*filt)[i] * white[i];
  dft2(f.v, g.n, +1);
  double amp0 = std::sqrt(2.0 * p.P / (pi * p.a0 * p.a0));
  double inv_n = 1.0 / g.n;
  for (int iy = 0; iy < g.n; ++iy) {
    for (int ix = 0; ix < g.n; ++ix) {
      vec2 r = g.coord(ix, iy);
      double env = amp0 * std::exp(-norm2(r) / (p.a0 * p.a0));
      f.at(ix, iy) *= env * inv_n;
    }
  }
  return f;
}

inline std::vector<cplx> white_tensor(const GridSpec& g, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<cplx> w(g.size());
  for (cplx& z : w) z = rng.cnormal();
  return w;
}

} // namespace detail

// One statistically independent frame.  Deterministic in (p, g, frame_index,
// seed); distinct frame indices give independent speckle.
inline ComplexField gs_frame(const GaussianSchellParams& p, const GridSpec& g,
                             std::uint64_t frame_index, std::uint64_t seed) {
  validate(p);
  detail::check_gs_grid(p, g);
  auto w = detail::white_tensor(g, stream_seed(seed, "gs-frame", frame_index));
  return detail::speckle_from_white(p, g, w, 0.0);
}

enum class TemporalMode { independent, exponential };

// Frame sequence with a chosen temporal structure.  independent: frame k is
// gs_frame(k).  exponential: the white tensor evolves as a first-order
// autoregressive chain, w_k = alpha w_{k-1} + sqrt(1-alpha^2) xi_k with
// alpha = exp(-dt/T0), so sampled phasors decorrelate as exp(-|t|/T0).
class GsEnsemble {
public:
  GsEnsemble(const GaussianSchellParams& p, const GridSpec& g,
             std::uint64_t seed, TemporalMode mode, double dt)
      : p_(p), g_(g), seed_(seed), mode_(mode), dt_(dt) {
    validate(p);
    detail::check_gs_grid(p, g);
    require(dt > 0.0, errc::invalid_argument, "frame spacing must be positive");
    if (mode_ == TemporalMode::exponential)
      alpha_ = std::exp(-dt_ / p_.T0);
  }

  ComplexField next() {
    std::uint64_t k = count_++;
    double t = k * dt_;
    if (mode_ == TemporalMode::independent) {
      ComplexField f = gs_frame(p_, g_, k, seed_);
      f.timestamp = t;
      return f;
    }
    if (k == 0) {
      w_ = detail::white_tensor(g_, stream_seed(seed_, "gs-frame", 0));
    } else {
      auto xi = detail::white_tensor(g_, stream_seed(seed_, "gs-frame", k));
      double beta = std::sqrt(1.0 - alpha_ * alpha_);
      for (std::size_t i = 0; i < w_.size(); ++i)
        w_[i] = alpha_ * w_[i] + beta * xi[i];
    }
    return detail::speckle_from_white(p_, g_, w_, t);
  }

  double dt() const { return dt_; }

private:
  GaussianSchellParams p_;
  GridSpec g_;
  std::uint64_t seed_;
  TemporalMode mode_;
  double dt_;
  double alpha_ = 0.0;
  std::uint64_t count_ = 0;
  std::vector<cplx> w_;
};

// ---------------------------------------------------------------------------
// Phase-only spatial light modulator source: (2M+1)^2 square pixels of side d,
// unity fill, opaque outside the D x D pupil, D = (2M+1) d.  Each pixel
// carries amplitude sqrt(P)/D and a programmable phase.
// ---------------------------------------------------------------------------

struct SlmParams {
  double lambda0 = 0; // m, carried with the scenario
  double d = 0;       // pixel side, m
  int M = 0;          // pixels index -M..M per axis
  double P = 0;       // photons/s across the pupil
  double T0 = 0;      // phase coherence time, s

  double D() const { return (2 * M + 1) * d; }
  int side() const { return 2 * M + 1; }
  int pixels() const { return side() * side(); }
};

inline void validate(const SlmParams& s) {
  require(s.lambda0 > 0 && s.d > 0 && s.P > 0 && s.T0 > 0,
          errc::invalid_argument, "slm parameters must be positive");
  require(s.M >= 1, errc::invalid_argument, "slm needs M >= 1");
}

enum class Modulation { sinusoidal, stochastic };

// Pixel drive program.  sinusoidal: phi_nm(t) = Phi cos((Omega0+dOmega_nm) t
// + psi_nm) with per-pixel frequency offsets, all distinct so that pair cross
// terms average away.  The fixed phase origins psi_nm matter too: an evenly
// spaced offset table admits four-pixel resonances (index differences p - q =
// p' - q' beat at zero frequency with weight J1(Phi)^4), and with a common
// origin those terms add coherently and imprint structure on long averages.
// Scrambled origins leave them incoherent.  Full-period averages of any
// single pixel phasor are J0(Phi) regardless of psi.  stochastic: uniform
// phase redrawn at exponential intervals, mean T0.
struct ModulationScheme {
  Modulation kind = Modulation::sinusoidal;
  double Phi = 2.40483; // first zero of J0, so the mean pixel phasor vanishes
  double Omega0 = 2.0 * pi * 1.0e3;
  std::vector<double> delta_omega; // row-major pixel order, rad/s
  std::vector<double> psi;         // fixed phase origins; empty means zeros
  std::uint64_t seed = 0;          // stochastic redraw stream
};

inline ModulationScheme make_sinusoidal_scheme(const SlmParams& s,
                                               double Omega0,
                                               double Phi = 2.40483) {
  validate(s);
  require(Omega0 > 0.0, errc::invalid_scheme, "Omega0 must be positive");
  ModulationScheme m;
  m.kind = Modulation::sinusoidal;
  m.Phi = Phi;
  m.Omega0 = Omega0;
  int K = s.pixels();
  m.delta_omega.resize(K);
  for (int i = 0; i < K; ++i)
    m.delta_omega[i] = Omega0 / 10.0 * (i + 1) / K;
  // Fixed draw so that identical parameters rebuild identical schemes.
  Rng origins(stream_seed(0, "slm-psi", 0));
  m.psi.resize(K);
  for (int i = 0; i < K; ++i) m.psi[i] = 2.0 * pi * origins.uniform01();
  return m;
}

inline void validate_scheme(const SlmParams& s, const ModulationScheme& m) {
  validate(s);
  if (m.kind == Modulation::stochastic) return;
  require(m.Phi > 0.0, errc::invalid_scheme, "modulation depth must be positive");
  require(m.Omega0 > 0.0, errc::invalid_scheme, "Omega0 must be positive");
  require(static_cast<int>(m.delta_omega.size()) == s.pixels(),
          errc::invalid_scheme, "frequency table size must match pixel count");
  require(m.psi.empty() || m.psi.size() == m.delta_omega.size(),
          errc::invalid_scheme, "phase origin table size must match pixel count");
  std::vector<double> sorted = m.delta_omega;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    require(std::abs(sorted[i]) <= m.Omega0 / 10.0 * (1.0 + 1e-12),
            errc::invalid_scheme, "|dOmega| must stay within Omega0/10");
    require(m.Omega0 + sorted[i] > 0.0, errc::invalid_scheme,
            "pixel frequencies must be positive");
    if (i > 0)
      require(sorted[i] != sorted[i - 1], errc::invalid_scheme,
              "pixel frequency offsets must be pairwise distinct");
  }
}

inline std::string scheme_warning(const ModulationScheme& m) {
  if (m.kind == Modulation::sinusoidal &&
      std::abs(std::cyl_bessel_j(0.0, m.Phi)) > 0.01)
    return "J0(Phi) is not small; the mean pixel phasor will not vanish";
  return {};
}

namespace detail {

// Stochastic pixel phase at time t: walk the jump chain from t = 0.  Kept as
// a free function so that the pure query and the sequential process consume
// the per-pixel stream identically.
inline double telegraph_phase(Rng& rng, double T0, double t, double& next_jump,
                              double& phase) {
  while (next_jump <= t) {
    phase = 2.0 * pi * rng.uniform01();
    next_jump += rng.exponential(T0);
  }
  return phase;
}

} // namespace detail

// Pixel phases at time t, row-major (n = -M..M major, m minor).
inline std::vector<double> slm_phases(const SlmParams& s,
                                      const ModulationScheme& m, double t) {
  validate_scheme(s, m);
  require(t >= 0.0, errc::invalid_argument, "time must be nonnegative");
  int K = s.pixels();
  std::vector<double> ph(K);
  if (m.kind == Modulation::sinusoidal) {
    for (int i = 0; i < K; ++i) {
      double psi = m.psi.empty() ? 0.0 : m.psi[i];
      ph[i] = m.Phi * std::cos((m.Omega0 + m.delta_omega[i]) * t + psi);
    }
  } else {
    for (int i = 0; i < K; ++i) {
      Rng rng(stream_seed(m.seed, "slm-telegraph", i));
      double phase = 2.0 * pi * rng.uniform01();
      double next_jump = rng.exponential(s.T0);
      ph[i] = detail::telegraph_phase(rng, s.T0, t, next_jump, phase);
    }
  }
  return ph;
}

// Sequential stochastic phase process; bit-identical to slm_phases at every
// queried time, amortized O(1) per step for monotone times.
class SlmPhaseProcess {
public:
  SlmPhaseProcess(const SlmParams& s, const ModulationScheme& m)
      : s_(s), m_(m) {
    validate_scheme(s, m);
    int K = s.pixels();
    px_.reserve(K);
    for (int i = 0; i < K; ++i) {
      Pixel p{Rng(stream_seed(m.seed, "slm-telegraph", i)), 0.0, 0.0};
      p.phase = 2.0 * pi * p.rng.uniform01();
      p.next_jump = p.rng.exponential(s.T0);
      px_.push_back(std::move(p));
    }
  }

  std::vector<double> phases_at(double t) {
    require(t >= t_, errc::invalid_argument,
            "stochastic phase process cannot rewind");
    t_ = t;
    std::vector<double> ph(px_.size());
    if (m_.kind == Modulation::sinusoidal) {
      for (std::size_t i = 0; i < px_.size(); ++i) {
        double psi = m_.psi.empty() ? 0.0 : m_.psi[i];
        ph[i] = m_.Phi * std::cos((m_.Omega0 + m_.delta_omega[i]) * t + psi);
      }
      return ph;
    }
    for (std::size_t i = 0; i < px_.size(); ++i)
      ph[i] = detail::telegraph_phase(px_[i].rng, s_.T0, t, px_[i].next_jump,
                                      px_[i].phase);
    return ph;
  }

private:
  struct Pixel {
    Rng rng;
    double phase;
    double next_jump;
  };
  SlmParams s_;
  ModulationScheme m_;
  std::vector<Pixel> px_;
  double t_ = 0.0;
};

// Piecewise-constant pupil field for one phase pattern.  Samples are assigned
// to the pixel whose center is nearest; outside the D x D pupil the field is
// zero.
inline ComplexField slm_field(const SlmParams& s,
                              const std::vector<double>& phases,
                              const GridSpec& g, double t = 0.0) {
  validate(s);
  require(static_cast<int>(phases.size()) == s.pixels(), errc::invalid_argument,
          "phase table size must match pixel count");
  require(g.pitch <= s.d / 4.0 * (1.0 + 1e-12), errc::sampling_violation,
          "pitch must resolve slm pixels (pitch <= d/4)");
  require(g.extent() >= s.D() * (1.0 - 1e-12), errc::sampling_violation,
          "grid extent must cover the pupil");

  double amp = std::sqrt(s.P) / s.D();
  int side = s.side();
  ComplexField f(g, t);
  for (int iy = 0; iy < g.n; ++iy) {
    int jy = static_cast<int>(std::floor(g.coord_y(iy) / s.d + 0.5));
    if (jy < -s.M || jy > s.M) continue;
    for (int ix = 0; ix < g.n; ++ix) {
      int jx = static_cast<int>(std::floor(g.coord_x(ix) / s.d + 0.5));
      if (jx < -s.M || jx > s.M) continue;
      int idx = (jy + s.M) * side + (jx + s.M);
      f.at(ix, iy) = std::polar(amp, phases[idx]);
    }
  }
  return f;
}

} // namespace gisim

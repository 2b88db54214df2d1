#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gisim/correlator.hpp"

using namespace gisim;

namespace {

// small pseudothermal scenario; geometry chosen for speed, not far-field use
ScenarioConfig small_gs_cfg() {
  ScenarioConfig cfg;
  cfg.source = SourceKind::gaussian_schell;
  cfg.gs.P = 1.0e6;
  cfg.gs.a0 = 0.6e-3;
  cfg.gs.rho0 = 60.0e-6;
  cfg.gs.T0 = 1.0e-3;
  cfg.lambda0 = 1.0e-6;
  cfg.L = 0.2;
  cfg.n = 128;
  cfg.frames = 400;
  cfg.dt = 1.0e-3;
  cfg.seed = 11;
  cfg.mask = point_mask(scan_grid(cfg));
  return cfg;
}

// small slm scenario in its far zone
ScenarioConfig small_slm_cfg() {
  ScenarioConfig cfg;
  cfg.source = SourceKind::slm;
  cfg.slm.lambda0 = 1.0e-6;
  cfg.slm.d = 20.0e-6;
  cfg.slm.M = 1;
  cfg.slm.P = 1.0e6;
  cfg.slm.T0 = 1.0e-3;
  cfg.scheme = make_sinusoidal_scheme(cfg.slm, 2.0 * pi * 1.0e3);
  cfg.lambda0 = 1.0e-6;
  cfg.L = 0.1;
  cfg.n = 64;
  cfg.frames = 720;
  cfg.dt = 2.5e-4;
  cfg.seed = 3;
  cfg.mask = point_mask(scan_grid(cfg));
  return cfg;
}

} // namespace

TEST_CASE("current correlation: closed-form values and alignment checks") {
  CurrentSeries a{0.0, 1.0e-3, {1, 2, 3, 4}};
  CurrentSeries b{0.0, 1.0e-3, {2, 2, 2, 2}};
  REQUIRE(correlate(a, b, false) == Catch::Approx(5.0));      // <ab> = 2*2.5
  REQUIRE(correlate(a, b, true) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(correlate(a, a, true) == Catch::Approx(1.25)); // population variance

  CurrentSeries wrong_dt{0.0, 2.0e-3, {1, 2, 3, 4}};
  REQUIRE_THROWS_AS(correlate(a, wrong_dt, true), error);
  CurrentSeries wrong_t0{1.0, 1.0e-3, {1, 2, 3, 4}};
  REQUIRE_THROWS_AS(correlate(a, wrong_t0, true), error);
  CurrentSeries wrong_len{0.0, 1.0e-3, {1, 2}};
  REQUIRE_THROWS_AS(correlate(a, wrong_len, true), error);
  CurrentSeries empty;
  REQUIRE_THROWS_AS(correlate(empty, empty, true), error);
}

TEST_CASE("scenario validation") {
  ScenarioConfig cfg = small_gs_cfg();
  REQUIRE_NOTHROW(validate_scenario(cfg));

  ScenarioConfig few = cfg;
  few.frames = 50;
  REQUIRE_THROWS_AS(validate_source_setup(few), error);

  ScenarioConfig offgrid = cfg;
  offgrid.mask = point_mask(make_grid(64, 1.0e-3));
  try {
    validate_scenario(offgrid);
    FAIL("expected a grid mismatch");
  } catch (const error& e) {
    REQUIRE(e.kind == errc::grid_mismatch);
  }

  ScenarioConfig wrong_lambda = small_slm_cfg();
  wrong_lambda.slm.lambda0 = 2.0e-6;
  REQUIRE_THROWS_AS(validate_source_setup(wrong_lambda), error);

  REQUIRE_THROWS_AS(run_pseudothermal(small_slm_cfg()), error);
  REQUIRE_THROWS_AS(run_slm(small_gs_cfg()), error);
}

TEST_CASE("synthetic frames: the correlator recovers a planted covariance") {
  ScenarioConfig cfg = small_gs_cfg();
  GridSpec scan = scan_grid(cfg);
  cfg.mask = point_mask(scan, vec2{});
  cfg.frames = 128;
  cfg.blocks = 4;

  int c = scan.n / 2;
  std::size_t px0 = scan.idx(c, c);
  std::vector<double> base(scan.size()), pat(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    base[i] = 3.0 + 1e-3 * static_cast<double>(i % 17);
    pat[i] = 0.5 + 1e-4 * static_cast<double>(i % 5);
  }

  auto supply = [&](std::size_t k) {
    RealField I(scan);
    double w = (k % 2 == 0) ? 1.0 : -1.0;
    for (std::size_t i = 0; i < scan.size(); ++i) I.v[i] = base[i] + w * pat[i];
    return I;
  };
  GhostImage img = detail::accumulate_image(
      cfg, scan, supply, {ImageMode::analytic, true, true});

  double cell = scan.pitch * scan.pitch;
  for (std::size_t i : {px0, px0 + 1, px0 + scan.n * 3 + 2}) {
    double want = pat[i] * pat[px0] * cell * cell; // A1 = cell, bucket = point
    REQUIRE(img.v[i] == Catch::Approx(want).epsilon(1e-10));
    REQUIRE(img.se[i] <= 1e-10 * std::abs(want)); // blocks are identical
  }
  REQUIRE(img.mean2 == Catch::Approx(base[px0] * cell).epsilon(1e-12));
}

TEST_CASE("an opaque mask yields a null image") {
  ScenarioConfig cfg = small_gs_cfg();
  cfg.frames = 120;
  cfg.mask = uniform_mask(scan_grid(cfg), 0.0);
  GhostImage img = run_pseudothermal(cfg);
  for (double v : img.v) REQUIRE(v == 0.0);
  REQUIRE(img.mean2 == 0.0);
}

TEST_CASE("dc block equals explicit mean subtraction, and reruns are stable") {
  ScenarioConfig cfg = small_gs_cfg();
  cfg.frames = 300;
  cfg.dc_block = false;
  GhostImage off = run_pseudothermal(cfg);
  cfg.dc_block = true;
  GhostImage on = run_pseudothermal(cfg);
  GhostImage on2 = run_pseudothermal(cfg);

  REQUIRE(on.v == on2.v); // bit-identical rerun
  REQUIRE(on.se == on2.se);
  for (std::size_t i = 0; i < on.v.size(); ++i) {
    double sub = off.v[i] - off.mean1[i] * off.mean2;
    REQUIRE(on.v[i] == sub); // same arithmetic path, exactly
  }
  REQUIRE(off.background_estimate > 0.0);
  REQUIRE(off.mode == ImageMode::pseudothermal);
  REQUIRE_FALSE(off.dc_block);
}

TEST_CASE("bucket shot noise preserves the correlation mean") {
  ScenarioConfig cfg = small_gs_cfg();
  cfg.frames = 500;
  GhostImage clean = run_pseudothermal(cfg);

  cfg.det2.shot_noise = true;
  cfg.det2.dt = 1.0e-3;
  cfg.det2.noise_seed = 77;
  GhostImage noisy = run_pseudothermal(cfg);

  std::size_t peak = 0;
  for (std::size_t i = 1; i < clean.v.size(); ++i)
    if (clean.v[i] > clean.v[peak]) peak = i;
  double se = std::hypot(clean.se[peak], noisy.se[peak]);
  REQUIRE(std::abs(noisy.v[peak] - clean.v[peak]) <= 4.0 * se);
}

TEST_CASE("accumulator preconditions") {
  ScenarioConfig cfg = small_gs_cfg();
  double cell = scan_grid(cfg).pitch * scan_grid(cfg).pitch;
  cfg.det1.A1 = 2.0 * cell;
  REQUIRE_THROWS_AS(run_pseudothermal(cfg), error);

  cfg = small_gs_cfg();
  cfg.det1.h = Impulse{Impulse::boxcar, 0.5}; // 500 taps > 400 frames
  try {
    run_pseudothermal(cfg);
    FAIL("expected insufficient data");
  } catch (const error& e) {
    REQUIRE(e.kind == errc::insufficient_data);
  }

  ScenarioConfig comp = small_slm_cfg();
  comp.frames = 200;
  comp.det1.shot_noise = true;
  comp.det1.dt = 1.0e-4;
  comp.det1.noise_seed = 5;
  REQUIRE_THROWS_AS(run_computational(comp), error);
}

TEST_CASE("slm run and computational run share every bit") {
  ScenarioConfig cfg = small_slm_cfg();
  cfg.frames = 360;
  cfg.dc_block = true;
  GhostImage a = run_slm(cfg);
  GhostImage b = run_computational(cfg);
  REQUIRE(a.v == b.v);
  REQUIRE(a.se == b.se);
  REQUIRE(a.mean1 == b.mean1);
  REQUIRE(a.mean2 == b.mean2);
  REQUIRE(a.mode == ImageMode::slm);
  REQUIRE(b.mode == ImageMode::computational);
  REQUIRE(b.dc_block);

  ModulationScheme st;
  st.kind = Modulation::stochastic;
  st.seed = 9;
  ScenarioConfig rnd = cfg;
  rnd.scheme = st;
  try {
    run_computational(rnd);
    FAIL("expected a determinism error");
  } catch (const error& e) {
    REQUIRE(e.kind == errc::nondeterministic_source);
  }
}

TEST_CASE("computed reference frames equal the physical arm") {
  ScenarioConfig cfg = small_slm_cfg();
  GridSpec src = source_grid(cfg);
  std::vector<double> times = {0.0, cfg.dt, 2.0 * cfg.dt, 5.0 * cfg.dt};
  ReferenceFrames ref = compute_reference(cfg, times);

  auto proc = std::make_shared<SlmPhaseProcess>(cfg.slm, cfg.scheme);
  auto sup = detail::slm_arm_supplier(cfg, src, proc);
  RealField f0 = sup(0);
  RealField f1 = sup(1);
  RealField f2 = sup(2);
  RealField f5 = sup(5);
  REQUIRE(ref.frames[0].v == f0.v);
  REQUIRE(ref.frames[1].v == f1.v);
  REQUIRE(ref.frames[2].v == f2.v);
  REQUIRE(ref.frames[3].v == f5.v);

  // mean and fluctuation accessor
  RealField d0 = ref.delta(0);
  for (std::size_t i = 0; i < d0.v.size(); ++i)
    REQUIRE(d0.v[i] == Catch::Approx(ref.frames[0].v[i] - ref.mean.v[i])
                           .margin(1e-18));

  REQUIRE_THROWS_AS(compute_reference(cfg, {}), error);
  REQUIRE_THROWS_AS(compute_reference(small_gs_cfg(), times), error);
}

TEST_CASE("slm time average approaches the phase-randomized prediction") {
  ScenarioConfig cfg = small_slm_cfg();
  // 720 frames at 0.25 ms cover 180 carrier periods
  GhostImage img = run_slm(cfg);
  GhostImage pred = predicted_image(cfg);

  std::size_t peak = 0;
  for (std::size_t i = 1; i < pred.v.size(); ++i)
    if (pred.v[i] > pred.v[peak]) peak = i;
  REQUIRE(img.v[peak] == Catch::Approx(pred.v[peak]).epsilon(0.2));
}

TEST_CASE("analytic image: separable fast path equals the generic path") {
  GaussianSchellParams p;
  p.P = 2.0;
  p.a0 = 1.0e-3;
  p.rho0 = 100.0e-6;
  p.T0 = 1.0e-3;
  CorrelationKernel k = gs_farfield_corr(p, 1.0e-6, 10.0);
  GridSpec g = make_grid(32, 2.0e-3);
  ObjectMask mask = disk_mask(g, 5.0e-3, vec2{2.0e-3, -1.0e-3});
  DetectorModel det;

  GhostImage fast = predicted_image(k, mask, det, det, true);
  CorrelationKernel flat = k;
  flat.separable = false;
  GhostImage slow = predicted_image(flat, mask, det, det, true);
  for (std::size_t i = 0; i < fast.v.size(); ++i)
    REQUIRE(fast.v[i] == Catch::Approx(slow.v[i]).epsilon(1e-11));
}

TEST_CASE("analytic image is linear in disjoint mask pieces") {
  GaussianSchellParams p;
  p.P = 1.0;
  p.a0 = 1.0e-3;
  p.rho0 = 100.0e-6;
  p.T0 = 1.0e-3;
  CorrelationKernel k = gs_farfield_corr(p, 1.0e-6, 10.0);
  GridSpec g = make_grid(32, 2.0e-3);
  DetectorModel det;

  ObjectMask left = disk_mask(g, 4.0e-3, vec2{-8.0e-3, 0.0});
  ObjectMask right = disk_mask(g, 4.0e-3, vec2{8.0e-3, 0.0});
  std::vector<double> both(g.size());
  for (std::size_t i = 0; i < both.size(); ++i)
    both[i] = std::max(left.t[i], right.t[i]);
  ObjectMask uni = make_mask(g, both);

  GhostImage a = predicted_image(k, left, det, det, true);
  GhostImage b = predicted_image(k, right, det, det, true);
  GhostImage c = predicted_image(k, uni, det, det, true);
  for (std::size_t i = 0; i < c.v.size(); ++i)
    REQUIRE(c.v[i] == Catch::Approx(a.v[i] + b.v[i]).epsilon(1e-12));
}

TEST_CASE("analytic point-object image has the textbook contrast of two") {
  GaussianSchellParams p;
  p.P = 1.0;
  p.a0 = 1.0e-3;
  p.rho0 = 100.0e-6;
  p.T0 = 1.0e-3;
  CorrelationKernel k = gs_farfield_corr(p, 1.0e-6, 10.0);
  GridSpec g = make_grid(64, 1.2e-3);
  ObjectMask mask = point_mask(g);
  DetectorModel det;

  GhostImage img = predicted_image(k, mask, det, det, false);
  std::size_t peak = 0;
  for (std::size_t i = 1; i < img.v.size(); ++i)
    if (img.v[i] > img.v[peak]) peak = i;
  REQUIRE(img.v[peak] / img.background_estimate == Catch::Approx(2.0).epsilon(1e-9));

  GhostImage dc = predicted_image(k, mask, det, det, true);
  REQUIRE(dc.v[peak] == Catch::Approx(img.v[peak] - img.background_estimate)
                            .epsilon(1e-12));
}

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gisim/io.hpp"

namespace gisim {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration files: one JSON document with nested sections mirroring
// ScenarioConfig, SI units throughout.  A run manifest embeds the resolved
// snapshot under "config", so a manifest is itself a valid config input.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T get_req(const json& j, const std::string& key) {
  require(j.is_object() && j.contains(key), errc::config_parse,
          "missing config key: " + key);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw error(errc::config_parse, "config key has the wrong type: " + key);
  }
}

template <typename T>
T get_opt(const json& j, const std::string& key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw error(errc::config_parse, "config key has the wrong type: " + key);
  }
}

inline vec2 get_vec2(const json& j, const std::string& key, vec2 fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  const json& a = j.at(key);
  require(a.is_array() && a.size() == 2, errc::config_parse,
          "config key must be [x, y]: " + key);
  return {a[0].get<double>(), a[1].get<double>()};
}

inline DetectorModel parse_detector(const json& j) {
  DetectorModel d;
  d.eta = get_opt(j, "eta", 1.0);
  d.q = get_opt(j, "q", 1.0);
  d.A1 = get_opt(j, "A1", 0.0);
  std::string imp = get_opt<std::string>(j, "impulse", "instantaneous");
  if (imp == "boxcar") {
    d.h.kind = Impulse::boxcar;
    d.h.width = get_req<double>(j, "impulse_width");
  } else {
    require(imp == "instantaneous", errc::config_parse,
            "impulse must be instantaneous or boxcar");
  }
  d.shot_noise = get_opt(j, "shot_noise", false);
  d.dt = get_opt(j, "bin_dt", 0.0);
  if (j.contains("noise_seed") && !j.at("noise_seed").is_null())
    d.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  return d;
}

inline json detector_json(const DetectorModel& d) {
  json j;
  j["eta"] = d.eta;
  j["q"] = d.q;
  j["A1"] = d.A1;
  j["impulse"] = d.h.kind == Impulse::boxcar ? "boxcar" : "instantaneous";
  if (d.h.kind == Impulse::boxcar) j["impulse_width"] = d.h.width;
  j["shot_noise"] = d.shot_noise;
  j["bin_dt"] = d.dt;
  if (d.noise_seed)
    j["noise_seed"] = *d.noise_seed;
  else
    j["noise_seed"] = nullptr;
  return j;
}

} // namespace detail

// Object description, applied on the scan grid once the geometry is known
struct ObjectSpec {
  std::string kind = "point"; // point | disk | double_slit | uniform
  vec2 position{};            // point
  double radius = 0;          // disk
  vec2 center{};              // disk
  double separation = 0, width = 0, height = 0; // double_slit
  double t = 1.0;                               // uniform
};

inline ObjectMask build_object(const ObjectSpec& o, const GridSpec& g) {
  if (o.kind == "point") return point_mask(g, o.position);
  if (o.kind == "disk") return disk_mask(g, o.radius, o.center);
  if (o.kind == "double_slit")
    return double_slit_mask(g, o.separation, o.width, o.height);
  if (o.kind == "uniform") return uniform_mask(g, o.t);
  throw error(errc::config_parse, "unknown object kind: " + o.kind);
}

struct RunConfig {
  ScenarioConfig scenario;
  ObjectSpec object;
  // sectioning
  std::vector<double> depths;
  double object_depth = 0;
  std::optional<GridSpec> section_scan;
  bool cache_stack = true;
  // validation
  std::size_t validate_frames = 2000;
  std::string outdir = ".";
};

inline RunConfig parse_config(const json& j) {
  RunConfig rc;
  ScenarioConfig& cfg = rc.scenario;
  try {
    cfg.lambda0 = detail::get_req<double>(j, "lambda0");
    cfg.L = detail::get_req<double>(j, "L");
    cfg.seed = detail::get_opt<std::uint64_t>(j, "seed", 1);

    const json& grid = j.contains("grid") ? j.at("grid") : json::object();
    cfg.n = detail::get_opt(grid, "n", 256);
    cfg.source_pitch = detail::get_opt(grid, "source_pitch", 0.0);

    const json& src = detail::get_req<json>(j, "source");
    std::string kind = detail::get_req<std::string>(src, "kind");
    if (kind == "gaussian_schell") {
      cfg.source = SourceKind::gaussian_schell;
      cfg.gs.P = detail::get_req<double>(src, "P");
      cfg.gs.a0 = detail::get_req<double>(src, "a0");
      cfg.gs.rho0 = detail::get_req<double>(src, "rho0");
      cfg.gs.T0 = detail::get_opt(src, "T0", 1.0e-3);
      std::string tm = detail::get_opt<std::string>(src, "temporal",
                                                    "independent");
      require(tm == "independent" || tm == "exponential", errc::config_parse,
              "temporal must be independent or exponential");
      cfg.temporal = tm == "independent" ? TemporalMode::independent
                                         : TemporalMode::exponential;
    } else if (kind == "slm") {
      cfg.source = SourceKind::slm;
      cfg.slm.lambda0 = cfg.lambda0;
      cfg.slm.d = detail::get_req<double>(src, "d");
      cfg.slm.M = detail::get_req<int>(src, "M");
      cfg.slm.P = detail::get_req<double>(src, "P");
      cfg.slm.T0 = detail::get_opt(src, "T0", 1.0e-3);
      const json& mod = detail::get_req<json>(src, "modulation");
      std::string mk = detail::get_opt<std::string>(mod, "kind", "sinusoidal");
      if (mk == "sinusoidal") {
        cfg.scheme = make_sinusoidal_scheme(
            cfg.slm, detail::get_opt(mod, "Omega0", 2.0 * pi * 1.0e3),
            detail::get_opt(mod, "Phi", 2.40483));
        if (mod.contains("delta_omega"))
          cfg.scheme.delta_omega =
              mod.at("delta_omega").get<std::vector<double>>();
      } else if (mk == "stochastic") {
        cfg.scheme.kind = Modulation::stochastic;
        cfg.scheme.seed = detail::get_opt<std::uint64_t>(mod, "seed", 0);
      } else {
        throw error(errc::config_parse,
                    "modulation kind must be sinusoidal or stochastic");
      }
    } else {
      throw error(errc::config_parse, "unknown source kind: " + kind);
    }

    const json& obj = j.contains("object") ? j.at("object") : json::object();
    rc.object.kind = detail::get_opt<std::string>(obj, "kind", "point");
    rc.object.position = detail::get_vec2(obj, "position", {});
    rc.object.radius = detail::get_opt(obj, "radius", 0.0);
    rc.object.center = detail::get_vec2(obj, "center", {});
    rc.object.separation = detail::get_opt(obj, "separation", 0.0);
    rc.object.width = detail::get_opt(obj, "width", 0.0);
    rc.object.height = detail::get_opt(obj, "height", 0.0);
    rc.object.t = detail::get_opt(obj, "t", 1.0);

    const json& det = j.contains("detectors") ? j.at("detectors")
                                              : json::object();
    cfg.det1 = det.contains("det1") ? detail::parse_detector(det.at("det1"))
                                    : DetectorModel{};
    cfg.det2 = det.contains("det2") ? detail::parse_detector(det.at("det2"))
                                    : DetectorModel{};

    const json& run = j.contains("run") ? j.at("run") : json::object();
    cfg.frames = detail::get_opt<std::size_t>(run, "frames", 10000);
    cfg.dt = detail::get_opt(run, "dt", 1.0e-3);
    cfg.dc_block = detail::get_opt(run, "dc_block", true);
    cfg.blocks = detail::get_opt(run, "blocks", 20);

    if (j.contains("section")) {
      const json& sec = j.at("section");
      rc.depths = detail::get_req<std::vector<double>>(sec, "depths");
      rc.object_depth = detail::get_req<double>(sec, "object_depth");
      if (sec.contains("scan")) {
        const json& sc = sec.at("scan");
        rc.section_scan =
            make_grid(detail::get_req<int>(sc, "n"),
                      detail::get_req<double>(sc, "pitch"),
                      detail::get_vec2(sc, "center", {}));
      }
      rc.cache_stack = detail::get_opt(sec, "cache_stack", true);
    }
    if (j.contains("validate"))
      rc.validate_frames =
          detail::get_opt<std::size_t>(j.at("validate"), "frames", 2000);
    rc.outdir = detail::get_opt<std::string>(j, "outdir", ".");
  } catch (const json::exception& e) {
    throw error(errc::config_parse, std::string("config parse: ") + e.what());
  }
  return rc;
}

// Self-contained snapshot that parse_config accepts again
inline json config_snapshot(const RunConfig& rc) {
  const ScenarioConfig& cfg = rc.scenario;
  json j;
  j["lambda0"] = cfg.lambda0;
  j["L"] = cfg.L;
  j["seed"] = cfg.seed;
  j["grid"] = {{"n", cfg.n}, {"source_pitch", cfg.source_pitch}};
  if (cfg.source == SourceKind::gaussian_schell) {
    j["source"] = {{"kind", "gaussian_schell"},
                   {"P", cfg.gs.P},
                   {"a0", cfg.gs.a0},
                   {"rho0", cfg.gs.rho0},
                   {"T0", cfg.gs.T0},
                   {"temporal", cfg.temporal == TemporalMode::independent
                                    ? "independent"
                                    : "exponential"}};
  } else {
    json mod;
    if (cfg.scheme.kind == Modulation::sinusoidal) {
      mod = {{"kind", "sinusoidal"},
             {"Phi", cfg.scheme.Phi},
             {"Omega0", cfg.scheme.Omega0},
             {"delta_omega", cfg.scheme.delta_omega}};
    } else {
      mod = {{"kind", "stochastic"}, {"seed", cfg.scheme.seed}};
    }
    j["source"] = {{"kind", "slm"},     {"d", cfg.slm.d}, {"M", cfg.slm.M},
                   {"P", cfg.slm.P},    {"T0", cfg.slm.T0},
                   {"modulation", mod}};
  }
  json obj;
  obj["kind"] = rc.object.kind;
  if (rc.object.kind == "point")
    obj["position"] = {rc.object.position.x, rc.object.position.y};
  if (rc.object.kind == "disk") {
    obj["radius"] = rc.object.radius;
    obj["center"] = {rc.object.center.x, rc.object.center.y};
  }
  if (rc.object.kind == "double_slit") {
    obj["separation"] = rc.object.separation;
    obj["width"] = rc.object.width;
    obj["height"] = rc.object.height;
  }
  if (rc.object.kind == "uniform") obj["t"] = rc.object.t;
  j["object"] = obj;
  j["detectors"] = {{"det1", detail::detector_json(cfg.det1)},
                    {"det2", detail::detector_json(cfg.det2)}};
  j["run"] = {{"frames", cfg.frames},
              {"dt", cfg.dt},
              {"dc_block", cfg.dc_block},
              {"blocks", cfg.blocks}};
  if (!rc.depths.empty()) {
    json sec;
    sec["depths"] = rc.depths;
    sec["object_depth"] = rc.object_depth;
    if (rc.section_scan)
      sec["scan"] = {{"n", rc.section_scan->n},
                     {"pitch", rc.section_scan->pitch},
                     {"center",
                      {rc.section_scan->center.x, rc.section_scan->center.y}}};
    sec["cache_stack"] = rc.cache_stack;
    j["section"] = sec;
  }
  j["validate"] = {{"frames", rc.validate_frames}};
  j["outdir"] = rc.outdir;
  return j;
}

// ---------------------------------------------------------------------------
// Image comparison
// ---------------------------------------------------------------------------

struct CompareReport {
  double max_abs = 0;
  double rel = 0; // max deviation relative to the first image's peak |value|
  bool pass = false;
};

inline CompareReport compare_images(const GridSpec& ga,
                                    const std::vector<double>& a,
                                    const GridSpec& gb,
                                    const std::vector<double>& b,
                                    double tolerance) {
  require(ga == gb, errc::grid_mismatch, "images live on different grids");
  require(a.size() == b.size(), errc::grid_mismatch, "image sizes differ");
  double peak = 0;
  for (double x : a) peak = std::max(peak, std::abs(x));
  CompareReport r;
  for (std::size_t i = 0; i < a.size(); ++i)
    r.max_abs = std::max(r.max_abs, std::abs(a[i] - b[i]));
  r.rel = peak > 0 ? r.max_abs / peak : (r.max_abs > 0 ? 1.0 : 0.0);
  r.pass = r.rel <= tolerance;
  return r;
}

// ---------------------------------------------------------------------------
// Scenario orchestration
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string scenario;
  json config;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0;
  json checks = json::array();
  std::string failed_stage; // empty on success
  bool all_passed = true;
};

namespace detail {

inline void add_check(RunManifest& m, const std::string& name, bool pass,
                      double measured, double predicted) {
  m.checks.push_back({{"name", name},
                      {"pass", pass},
                      {"measured", measured},
                      {"predicted", predicted}});
  if (!pass) m.all_passed = false;
}

inline std::string out_path(const RunConfig& rc, const std::string& name) {
  return (std::filesystem::path(rc.outdir) / name).string();
}

inline void emit_image(RunManifest& m, const RunConfig& rc,
                       const std::string& base, const GhostImage& img) {
  std::string p = out_path(rc, base);
  write_image_bundle(p, img);
  m.outputs.push_back(p + ".pgm");
  m.outputs.push_back(p + ".csv");
  m.outputs.push_back(p + ".json");
}

inline void run_imaging(RunManifest& m, RunConfig& rc,
                        const std::string& sub) {
  ScenarioConfig& cfg = rc.scenario;
  GridSpec scan = scan_grid(cfg);
  cfg.mask = build_object(rc.object, scan);

  GhostImage img;
  if (sub == "pseudothermal")
    img = run_pseudothermal(cfg);
  else if (sub == "slm")
    img = run_slm(cfg);
  else
    img = run_computational(cfg);
  emit_image(m, rc, sub + "-image", img);

  ScenarioConfig pc = cfg;
  if (sub == "computational") pc.dc_block = true; // that run always subtracts means
  GhostImage pred = predicted_image(pc);
  emit_image(m, rc, sub + "-predicted", pred);

  // measured spot width against the analytic oracle where a spot exists
  try {
    double wm = psf_width(img);
    double wp = psf_width(pred);
    add_check(m, "psf_width_vs_predicted", std::abs(wm - wp) <= 0.15 * wp, wm,
              wp);
  } catch (const error&) {
    // extended objects have no single spot; nothing to check
  }
  if (cfg.source == SourceKind::gaussian_schell) {
    double ff = wavenumber(cfg.lambda0) * cfg.gs.a0 * cfg.gs.rho0 /
                (2.0 * cfg.L);
    add_check(m, "far_field_factor", ff <= 0.1, ff, 0.1);
  } else {
    double ff = wavenumber(cfg.lambda0) * cfg.slm.d * cfg.slm.D() / cfg.L;
    add_check(m, "far_field_factor", ff <= 0.1, ff, 0.1);
  }
}

inline void run_section(RunManifest& m, RunConfig& rc) {
  ScenarioConfig& cfg = rc.scenario;
  require(!rc.depths.empty(), errc::config_parse,
          "section subcommand needs a section block");

  StackOptions opt;
  opt.scan = rc.section_scan;

  std::vector<GridSpec> grids;
  for (double Lj : rc.depths) {
    if (opt.scan) {
      grids.push_back(*opt.scan);
    } else {
      ScenarioConfig c = cfg;
      c.L = Lj;
      grids.push_back(plan_fresnel(source_grid(c), c.lambda0, Lj).out);
    }
  }
  std::uint64_t fp = stack_fingerprint(cfg.slm, cfg.scheme, cfg.lambda0,
                                       cfg.dt, cfg.frames, rc.depths, grids);
  char fphex[32];
  std::snprintf(fphex, sizeof fphex, "%016llx",
                static_cast<unsigned long long>(fp));
  std::string cache_base = out_path(rc, std::string("stack-") + fphex);

  ReferenceStack st;
  if (rc.cache_stack &&
      std::filesystem::exists(cache_base + ".manifest.txt")) {
    st = load_stack(cache_base, fp);
  } else {
    st = build_stack(cfg, rc.depths, opt);
    if (rc.cache_stack) {
      save_stack(cache_base, st);
      m.outputs.push_back(cache_base + ".manifest.txt");
      m.outputs.push_back(cache_base + ".bin");
    }
  }

  GridSpec bucket_grid = rc.section_scan ? *rc.section_scan : [&] {
    ScenarioConfig c = cfg;
    c.L = rc.object_depth;
    return plan_fresnel(source_grid(c), c.lambda0, rc.object_depth).out;
  }();
  ObjectMask mask = build_object(rc.object, bucket_grid);
  CurrentSeries bucket = sectioning_bucket(cfg, rc.object_depth, mask,
                                           cfg.det2);
  write_current_csv(out_path(rc, "bucket.csv"), bucket);
  m.outputs.push_back(out_path(rc, "bucket.csv"));

  std::vector<GhostImage> slices = section(bucket, st, fp, cfg.blocks);
  for (std::size_t j = 0; j < slices.size(); ++j) {
    char name[64];
    std::snprintf(name, sizeof name, "slice-%02zu", j);
    emit_image(m, rc, name, slices[j]);
  }
  DepthProfile dp = depth_profile(slices, rc.depths);
  write_profile_csv(out_path(rc, "depth-profile.csv"), dp);
  m.outputs.push_back(out_path(rc, "depth-profile.csv"));

  double span = *std::max_element(rc.depths.begin(), rc.depths.end()) -
                *std::min_element(rc.depths.begin(), rc.depths.end());
  // axial localization cannot beat the depth of focus of the reference
  // speckle, k0 * (coherence cell)^2 at the object plane
  double cell = cfg.lambda0 * rc.object_depth / cfg.slm.D();
  double dof = wavenumber(cfg.lambda0) * cell * cell;
  add_check(m, "focus_within_scan",
            dp.focus_estimate >= *std::min_element(rc.depths.begin(),
                                                   rc.depths.end()) &&
                dp.focus_estimate <= *std::max_element(rc.depths.begin(),
                                                       rc.depths.end()),
            dp.focus_estimate, rc.object_depth);
  add_check(m, "focus_vs_object_depth",
            std::abs(dp.focus_estimate - rc.object_depth) <=
                0.25 * std::max(span, dof),
            dp.focus_estimate, rc.object_depth);
}

inline void run_validate(RunManifest& m, RunConfig& rc) {
  ScenarioConfig& cfg = rc.scenario;
  require(cfg.source == SourceKind::gaussian_schell, errc::config_parse,
          "validate subcommand runs the gaussian-schell probe suite");
  GridSpec src = source_grid(cfg);
  GridSpec scan = scan_grid(cfg);
  CorrelationKernel k = gs_farfield_corr(cfg.gs, cfg.lambda0, cfg.L);

  double rL = k.coh_radius;
  // snap the probe pattern onto the scan lattice: the estimator reads the
  // nearest sample anyway, and the curvature phase is steep enough that the
  // analytic value must be taken at the same point
  auto snap = [&](vec2 r) {
    int ix, iy;
    scan.nearest(r, ix, iy);
    return scan.coord(ix, iy);
  };
  std::vector<CorrProbe> probes;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      probes.push_back(CorrProbe{snap({(i - 1) * rL, (j - 1) * rL}),
                                 snap({(i - 1) * rL + rL / 2, (j - 1) * rL})});

  std::size_t N = rc.validate_frames;
  GsEnsemble ens(cfg.gs, src, stream_seed(cfg.seed, "source", 0),
                 TemporalMode::independent, cfg.dt);
  ComplexField buf;
  auto gen = [&](std::size_t) -> const ComplexField& {
    buf = fresnel_propagate(ens.next(), cfg.lambda0, cfg.L);
    for (cplx& z : buf.v) z *= 1.0 / std::sqrt(2.0); // one arm of the split
    return buf;
  };
  auto same = [&](std::size_t) -> const ComplexField& { return buf; };
  std::vector<CorrEstimate> est = estimate_corr_stream(N, gen, same, probes);
  std::vector<cplx> analytic;
  for (const CorrProbe& p : probes) analytic.push_back(k(p.r1, p.r2));

  write_probe_csv(out_path(rc, "probes.csv"), probes, analytic, est);
  m.outputs.push_back(out_path(rc, "probes.csv"));

  for (std::size_t i = 0; i < probes.size(); ++i) {
    double se = std::max(std::hypot(est[i].se_re, est[i].se_im), 1e-300);
    double dev = std::abs(est[i].mean - analytic[i]);
    char name[48];
    std::snprintf(name, sizeof name, "probe_%zu_within_3se", i);
    add_check(m, name, dev <= 3.0 * se, dev, 3.0 * se);
  }
}

} // namespace detail

inline json manifest_json(const RunManifest& m) {
  json j;
  j["scenario"] = m.scenario;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["outputs"] = m.outputs;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  j["checks"] = m.checks;
  j["all_passed"] = m.all_passed;
  if (!m.failed_stage.empty()) j["failed_stage"] = m.failed_stage;
  return j;
}

// Execute a subcommand against a parsed config.  The manifest is written in
// every case; a thrown error still leaves one naming the failing stage.
inline RunManifest run_scenario(const std::string& subcommand, const json& cj,
                                const std::string& outdir_override = "") {
  // a manifest is re-runnable: its embedded snapshot takes over
  json effective = cj.is_object() && cj.contains("config") &&
                           cj.at("config").is_object()
                       ? cj.at("config")
                       : cj;
  RunConfig rc = parse_config(effective);
  if (!outdir_override.empty()) rc.outdir = outdir_override;
  if (const char* env = std::getenv("GISIM_OUT"); env && *env)
    rc.outdir = env;
  std::filesystem::create_directories(rc.outdir);

  RunManifest m;
  m.scenario = subcommand;
  m.seed = rc.scenario.seed;
  m.config = config_snapshot(rc);

  auto start = std::chrono::steady_clock::now();
  try {
    if (subcommand == "pseudothermal" || subcommand == "slm" ||
        subcommand == "computational")
      detail::run_imaging(m, rc, subcommand);
    else if (subcommand == "section")
      detail::run_section(m, rc);
    else if (subcommand == "validate")
      detail::run_validate(m, rc);
    else
      throw error(errc::config_parse, "unknown subcommand: " + subcommand);
  } catch (...) {
    m.failed_stage = subcommand;
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    auto f = detail::open_out(detail::out_path(rc, "manifest.json"), false);
    f << manifest_json(m).dump(2) << '\n';
    throw;
  }
  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();

  auto f = detail::open_out(detail::out_path(rc, "manifest.json"), false);
  f << manifest_json(m).dump(2) << '\n';
  detail::check_write(f, "manifest.json");
  m.outputs.push_back(detail::out_path(rc, "manifest.json"));
  return m;
}

// exit-code mapping: 1 config/environment, 2 precondition, 3 check failure
inline int exit_code_for(const error& e) {
  switch (e.kind) {
  case errc::config_parse:
  case errc::io_failure:
    return 1;
  default:
    return 2;
  }
}

} // namespace gisim

#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gisim/sectioning.hpp"

namespace gisim {

namespace detail {

// shortest round-trip decimal form
inline std::string fmt_g17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary | std::ios::out
                               : std::ios::out);
  require(f.good(), errc::io_failure, "cannot open " + path + " for writing");
  return f;
}

inline std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream f(path, binary ? std::ios::binary | std::ios::in
                               : std::ios::in);
  require(f.good(), errc::io_failure, "cannot open " + path);
  return f;
}

inline void check_write(const std::ostream& f, const std::string& path) {
  require(f.good(), errc::io_failure, "write to " + path + " failed");
}

} // namespace detail

// 16-bit binary PGM, max-value scaled; the applied affine map is recorded in
// a sidecar so values can be recovered from the raster.
inline void write_pgm16(const std::string& path, const GridSpec& g,
                        const std::vector<double>& v) {
  require(v.size() == g.size(), errc::grid_mismatch,
          "values do not match the grid");
  double lo = v.empty() ? 0 : v[0], hi = lo;
  for (double x : v) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  double span = hi - lo;
  auto f = detail::open_out(path, true);
  f << "P5\n" << g.n << " " << g.n << "\n65535\n";
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix) {
      double x = v[g.idx(ix, iy)];
      unsigned s =
          span > 0
              ? static_cast<unsigned>(std::lround((x - lo) / span * 65535.0))
              : 0u;
      f.put(static_cast<char>((s >> 8) & 0xff));
      f.put(static_cast<char>(s & 0xff));
    }
  detail::check_write(f, path);

  auto sc = detail::open_out(path + ".scale.txt", false);
  sc << "pgm16 scale: value = min + raster/65535 * (max - min)\n"
     << "min " << detail::fmt_g17(lo) << "\n"
     << "max " << detail::fmt_g17(hi) << "\n"
     << "pitch " << detail::fmt_g17(g.pitch) << "\n";
  detail::check_write(sc, path + ".scale.txt");
}

inline void write_pgm16(const std::string& path, const RealField& f) {
  write_pgm16(path, f.grid, f.v);
}

inline void write_field_csv(const std::string& path, const GridSpec& g,
                            const std::vector<double>& v) {
  require(v.size() == g.size(), errc::grid_mismatch,
          "values do not match the grid");
  auto f = detail::open_out(path, false);
  f << "x,y,value\n";
  for (int iy = 0; iy < g.n; ++iy)
    for (int ix = 0; ix < g.n; ++ix)
      f << detail::fmt_g17(g.coord_x(ix)) << ','
        << detail::fmt_g17(g.coord_y(iy)) << ','
        << detail::fmt_g17(v[g.idx(ix, iy)]) << '\n';
  detail::check_write(f, path);
}

// Reconstruct a grid and its values from an x,y,value export.  Row count
// fixes n, x spacing fixes the pitch, and the first coordinate fixes the
// center; rows must be in the writer's row-major order.
inline RealField read_field_csv(const std::string& path) {
  auto f = detail::open_in(path, false);
  std::string line;
  std::getline(f, line); // header
  std::vector<double> xs, ys, vs;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    double x, y, v;
    require(std::sscanf(line.c_str(), "%lf,%lf,%lf", &x, &y, &v) == 3,
            errc::io_failure, "malformed field row: " + line);
    xs.push_back(x);
    ys.push_back(y);
    vs.push_back(v);
  }
  std::size_t total = vs.size();
  int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(total))));
  require(n >= 2 && static_cast<std::size_t>(n) * n == total, errc::io_failure,
          "field export is not a square grid");
  double pitch = xs[1] - xs[0];
  require(pitch > 0, errc::io_failure, "field export columns not increasing");
  vec2 center{xs[0] + (n / 2) * pitch, ys[0] + (n / 2) * pitch};
  RealField out(make_grid(n, pitch, center), 0.0);
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix) {
      std::size_t r = static_cast<std::size_t>(iy) * n + ix;
      require(std::abs(xs[r] - out.grid.coord_x(ix)) <= 1e-6 * pitch &&
                  std::abs(ys[r] - out.grid.coord_y(iy)) <= 1e-6 * pitch,
              errc::io_failure, "field export rows out of order");
      out.v[out.grid.idx(ix, iy)] = vs[r];
    }
  return out;
}

inline void write_current_csv(const std::string& path,
                              const CurrentSeries& s) {
  auto f = detail::open_out(path, false);
  f << "t,value\n";
  for (std::size_t k = 0; k < s.v.size(); ++k)
    f << detail::fmt_g17(s.t0 + k * s.dt) << ',' << detail::fmt_g17(s.v[k])
      << '\n';
  detail::check_write(f, path);
}

inline CurrentSeries read_current_csv(const std::string& path) {
  auto f = detail::open_in(path, false);
  std::string line;
  std::getline(f, line); // header
  CurrentSeries s;
  std::vector<double> t;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    double ti, vi;
    require(std::sscanf(line.c_str(), "%lf,%lf", &ti, &vi) == 2,
            errc::io_failure, "malformed current row: " + line);
    t.push_back(ti);
    s.v.push_back(vi);
  }
  require(s.v.size() >= 2, errc::io_failure, "current record too short");
  s.t0 = t.front();
  s.dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  require(s.dt > 0, errc::io_failure, "current record times not increasing");
  for (std::size_t k = 0; k < t.size(); ++k)
    require(std::abs(t[k] - (s.t0 + k * s.dt)) <= 1e-6 * s.dt,
            errc::io_failure, "current record not uniformly sampled");
  return s;
}

// Modulation schedule as (pixel n, pixel m, frequency offset) rows so a
// reconstruction run can replay a generation run.  n indexes x, m indexes y,
// both in [-M, M].
inline void write_schedule_csv(const std::string& path, const SlmParams& s,
                               const ModulationScheme& m) {
  require(static_cast<int>(m.delta_omega.size()) == s.pixels(),
          errc::invalid_scheme, "schedule size does not match the array");
  auto f = detail::open_out(path, false);
  f << "n,m,delta_omega\n";
  int side = s.side();
  for (int jy = 0; jy < side; ++jy)
    for (int jx = 0; jx < side; ++jx)
      f << (jx - s.M) << ',' << (jy - s.M) << ','
        << detail::fmt_g17(m.delta_omega[static_cast<std::size_t>(jy) * side + jx])
        << '\n';
  detail::check_write(f, path);
}

inline std::vector<double> read_schedule_csv(const std::string& path,
                                             const SlmParams& s) {
  auto f = detail::open_in(path, false);
  std::string line;
  std::getline(f, line);
  int side = s.side();
  std::vector<double> out(s.pixels());
  std::vector<bool> seen(s.pixels(), false);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    int n, m;
    double w;
    require(std::sscanf(line.c_str(), "%d,%d,%lf", &n, &m, &w) == 3,
            errc::io_failure, "malformed schedule row: " + line);
    require(n >= -s.M && n <= s.M && m >= -s.M && m <= s.M, errc::io_failure,
            "schedule pixel index out of range");
    std::size_t i = static_cast<std::size_t>(m + s.M) * side + (n + s.M);
    require(!seen[i], errc::io_failure, "duplicate schedule pixel");
    seen[i] = true;
    out[i] = w;
  }
  for (bool b : seen)
    require(b, errc::io_failure, "schedule is missing pixels");
  return out;
}

// Analytic-vs-sampled coherence probes
inline void write_probe_csv(const std::string& path,
                            const std::vector<CorrProbe>& probes,
                            const std::vector<cplx>& analytic,
                            const std::vector<CorrEstimate>& sampled) {
  require(probes.size() == analytic.size() && probes.size() == sampled.size(),
          errc::invalid_argument, "probe report arrays must align");
  auto f = detail::open_out(path, false);
  f << "r1x,r1y,r2x,r2y,analytic_re,analytic_im,sampled_re,sampled_im,"
       "stderr_re,stderr_im\n";
  for (std::size_t i = 0; i < probes.size(); ++i)
    f << detail::fmt_g17(probes[i].r1.x) << ',' << detail::fmt_g17(probes[i].r1.y)
      << ',' << detail::fmt_g17(probes[i].r2.x) << ','
      << detail::fmt_g17(probes[i].r2.y) << ','
      << detail::fmt_g17(analytic[i].real()) << ','
      << detail::fmt_g17(analytic[i].imag()) << ','
      << detail::fmt_g17(sampled[i].mean.real()) << ','
      << detail::fmt_g17(sampled[i].mean.imag()) << ','
      << detail::fmt_g17(sampled[i].se_re) << ','
      << detail::fmt_g17(sampled[i].se_im) << '\n';
  detail::check_write(f, path);
}

inline void write_profile_csv(const std::string& path,
                              const DepthProfile& dp) {
  auto f = detail::open_out(path, false);
  f << "depth,psf_width\n";
  for (std::size_t i = 0; i < dp.depths.size(); ++i)
    f << detail::fmt_g17(dp.depths[i]) << ',' << detail::fmt_g17(dp.widths[i])
      << '\n';
  f << "# focus_estimate," << detail::fmt_g17(dp.focus_estimate) << '\n';
  detail::check_write(f, path);
}

inline const char* to_string(ImageMode m) {
  switch (m) {
  case ImageMode::pseudothermal: return "pseudothermal";
  case ImageMode::slm: return "slm";
  case ImageMode::computational: return "computational";
  default: return "analytic";
  }
}

// Summary metrics for an image; null entries mean "not measurable here"
inline nlohmann::json image_metrics(const GhostImage& img) {
  double peak = 0;
  std::size_t pk = 0;
  for (std::size_t i = 0; i < img.v.size(); ++i)
    if (img.v[i] > peak) {
      peak = img.v[i];
      pk = i;
    }
  nlohmann::json j;
  j["peak"] = peak;
  j["background"] = img.background_estimate;
  j["mode"] = to_string(img.mode);
  j["dc_block"] = img.dc_block;
  j["frames"] = img.frames;
  j["grid"] = {{"n", img.grid.n},
               {"pitch", img.grid.pitch},
               {"center", {img.grid.center.x, img.grid.center.y}}};
  j["fwhm_x"] = nullptr;
  j["fwhm_y"] = nullptr;
  if (peak > 0) {
    int px = static_cast<int>(pk) % img.grid.n;
    int py = static_cast<int>(pk) / img.grid.n;
    double dl, dr, dd, du;
    if (detail::half_crossing(img, px, py, -1, 0, peak / 2, dl) &&
        detail::half_crossing(img, px, py, +1, 0, peak / 2, dr))
      j["fwhm_x"] = dl + dr;
    if (detail::half_crossing(img, px, py, 0, -1, peak / 2, dd) &&
        detail::half_crossing(img, px, py, 0, +1, peak / 2, du))
      j["fwhm_y"] = dd + du;
  }
  if (img.background_estimate > 0)
    j["contrast"] = peak / img.background_estimate;
  else
    j["contrast"] = nullptr;
  return j;
}

// PGM raster + CSV + JSON metrics under a common basename
inline void write_image_bundle(const std::string& base, const GhostImage& img) {
  write_pgm16(base + ".pgm", img.grid, img.v);
  write_field_csv(base + ".csv", img.grid, img.v);
  auto f = detail::open_out(base + ".json", false);
  f << image_metrics(img).dump(2) << '\n';
  detail::check_write(f, base + ".json");
}

// ---------------------------------------------------------------------------
// Reference-stack persistence: a text manifest plus a flat binary container
// of row-major 64-bit reals (mean frame then the delta frames, per depth).
// ---------------------------------------------------------------------------

inline void save_stack(const std::string& base, const ReferenceStack& st) {
  require(std::endian::native == std::endian::little, errc::io_failure,
          "stack containers are written little-endian");
  std::string binpath = base + ".bin";
  {
    auto f = detail::open_out(base + ".manifest.txt", false);
    char fp[32];
    std::snprintf(fp, sizeof fp, "%016llx",
                  static_cast<unsigned long long>(st.fingerprint));
    f << "reference-stack\n"
      << "fingerprint " << fp << "\n"
      << "lambda0 " << detail::fmt_g17(st.lambda0) << "\n"
      << "dt " << detail::fmt_g17(st.dt) << "\n"
      << "frames " << st.frames << "\n"
      << "depths " << st.depths.size() << "\n";
    for (std::size_t j = 0; j < st.depths.size(); ++j)
      f << "depth " << j << " L " << detail::fmt_g17(st.depths[j]) << " n "
        << st.grids[j].n << " pitch " << detail::fmt_g17(st.grids[j].pitch)
        << " cx " << detail::fmt_g17(st.grids[j].center.x) << " cy "
        << detail::fmt_g17(st.grids[j].center.y) << "\n";
    f << "container " << binpath << "\n";
    detail::check_write(f, base + ".manifest.txt");
  }

  auto f = detail::open_out(binpath, true);
  f << "GISTACK1\nendian little\ndepths " << st.depths.size() << " frames "
    << st.frames << "\ndims";
  for (const GridSpec& g : st.grids) f << ' ' << g.n;
  f << "\ndata\n";
  for (std::size_t j = 0; j < st.depths.size(); ++j) {
    const auto& mean = st.mean[j];
    f.write(reinterpret_cast<const char*>(mean.data()),
            static_cast<std::streamsize>(mean.size() * sizeof(double)));
    for (const auto& frame : st.delta[j])
      f.write(reinterpret_cast<const char*>(frame.data()),
              static_cast<std::streamsize>(frame.size() * sizeof(double)));
  }
  detail::check_write(f, binpath);
}

inline ReferenceStack load_stack(const std::string& base,
                                 std::uint64_t expected_fingerprint = 0) {
  require(std::endian::native == std::endian::little, errc::io_failure,
          "stack containers are little-endian");
  ReferenceStack st;
  std::string binpath;
  {
    auto f = detail::open_in(base + ".manifest.txt", false);
    std::string tag;
    f >> tag;
    require(tag == "reference-stack", errc::io_failure,
            "not a stack manifest: " + base);
    std::size_t ndepths = 0;
    while (f >> tag) {
      if (tag == "fingerprint") {
        std::string hex;
        f >> hex;
        st.fingerprint = std::stoull(hex, nullptr, 16);
      } else if (tag == "lambda0") {
        f >> st.lambda0;
      } else if (tag == "dt") {
        f >> st.dt;
      } else if (tag == "frames") {
        f >> st.frames;
      } else if (tag == "depths") {
        f >> ndepths;
      } else if (tag == "depth") {
        std::size_t j;
        std::string key;
        double L, pitch, cx, cy;
        int n;
        f >> j >> key >> L >> key >> n >> key >> pitch >> key >> cx >> key >>
            cy;
        st.depths.push_back(L);
        st.grids.push_back(make_grid(n, pitch, {cx, cy}));
      } else if (tag == "container") {
        f >> binpath;
      }
    }
    require(st.depths.size() == ndepths && !st.depths.empty(),
            errc::io_failure, "manifest depth list inconsistent");
  }
  if (expected_fingerprint != 0)
    require(st.fingerprint == expected_fingerprint, errc::fingerprint_mismatch,
            "stack was built from a different schedule");

  auto f = detail::open_in(binpath, true);
  std::string line;
  std::getline(f, line);
  require(line == "GISTACK1", errc::io_failure, "bad container magic");
  std::getline(f, line);
  require(line == "endian little", errc::io_failure,
          "container endianness unsupported");
  std::size_t depths = 0, frames = 0;
  {
    std::getline(f, line);
    std::istringstream h(line);
    std::string key;
    h >> key >> depths >> key >> frames;
    require(depths == st.depths.size() && frames == st.frames,
            errc::io_failure, "container shape disagrees with the manifest");
  }
  {
    std::getline(f, line);
    std::istringstream h(line);
    std::string key;
    h >> key;
    for (std::size_t j = 0; j < depths; ++j) {
      int n = 0;
      h >> n;
      require(n == st.grids[j].n, errc::io_failure,
              "container dims disagree with the manifest");
    }
  }
  std::getline(f, line);
  require(line == "data", errc::io_failure, "container data marker missing");

  st.mean.resize(depths);
  st.delta.resize(depths);
  for (std::size_t j = 0; j < depths; ++j) {
    std::size_t npx = st.grids[j].size();
    st.mean[j].resize(npx);
    f.read(reinterpret_cast<char*>(st.mean[j].data()),
           static_cast<std::streamsize>(npx * sizeof(double)));
    st.delta[j].assign(frames, std::vector<double>(npx));
    for (std::size_t k = 0; k < frames; ++k)
      f.read(reinterpret_cast<char*>(st.delta[j][k].data()),
             static_cast<std::streamsize>(npx * sizeof(double)));
  }
  require(f.good(), errc::io_failure, "container truncated");
  return st;
}

} // namespace gisim

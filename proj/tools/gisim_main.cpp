#include <cstdio>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "gisim/runner.hpp"

namespace {

gisim::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f.good())
    throw gisim::error(gisim::errc::io_failure, "cannot open " + path);
  try {
    return gisim::json::parse(f);
  } catch (const gisim::json::exception& e) {
    throw gisim::error(gisim::errc::config_parse,
                       path + ": " + e.what());
  }
}

int run_sub(const std::string& sub, const std::string& config,
            const std::string& outdir) {
  gisim::RunManifest m = gisim::run_scenario(sub, load_json(config), outdir);
  for (const auto& c : m.checks)
    std::printf("%s %s  measured=%.6g predicted=%.6g\n",
                c.at("pass").get<bool>() ? "PASS" : "FAIL",
                c.at("name").get<std::string>().c_str(),
                c.at("measured").get<double>(),
                c.at("predicted").get<double>());
  std::printf("%s: %zu outputs, %.1fs\n", sub.c_str(), m.outputs.size(),
              m.wall_clock_seconds);
  return m.all_passed ? 0 : 3;
}

int run_compare(const std::string& a, const std::string& b, double tol) {
  gisim::RealField fa = gisim::read_field_csv(a);
  gisim::RealField fb = gisim::read_field_csv(b);
  gisim::CompareReport r =
      gisim::compare_images(fa.grid, fa.v, fb.grid, fb.v, tol);
  std::printf("%s  max|a-b|=%.6g  peak-relative=%.6g  tolerance=%.6g\n",
              r.pass ? "PASS" : "FAIL", r.max_abs, r.rel, tol);
  return r.pass ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"wave-optics ghost imaging simulator"};
  app.require_subcommand(1);

  std::string config, outdir;
  auto add_run = [&](const std::string& name, const std::string& desc) {
    CLI::App* s = app.add_subcommand(name, desc);
    s->add_option("config", config, "JSON scenario file (or a prior manifest)")
        ->required();
    s->add_option("-o,--outdir", outdir,
                  "output directory (GISIM_OUT overrides)");
    return s;
  };
  CLI::App* pseudo = add_run(
      "pseudothermal", "two-detector run with a gaussian-schell source");
  CLI::App* slm =
      add_run("slm", "two-detector run with the phase-modulated pixel source");
  CLI::App* comp = add_run(
      "computational",
      "single-bucket run correlated against the computed reference");
  CLI::App* sect = add_run(
      "section", "depth scan of one bucket record against a reference stack");
  CLI::App* valid = add_run(
      "validate", "sampled-vs-analytic coherence probes for the source model");

  std::string cmp_a, cmp_b;
  double cmp_tol = 0.05;
  CLI::App* cmp =
      app.add_subcommand("compare", "compare two image CSV exports");
  cmp->add_option("a", cmp_a, "first image CSV")->required();
  cmp->add_option("b", cmp_b, "second image CSV")->required();
  cmp->add_option("-t,--tolerance", cmp_tol,
                  "peak-relative deviation allowed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pseudo->parsed()) return run_sub("pseudothermal", config, outdir);
    if (slm->parsed()) return run_sub("slm", config, outdir);
    if (comp->parsed()) return run_sub("computational", config, outdir);
    if (sect->parsed()) return run_sub("section", config, outdir);
    if (valid->parsed()) return run_sub("validate", config, outdir);
    if (cmp->parsed()) return run_compare(cmp_a, cmp_b, cmp_tol);
  } catch (const gisim::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return gisim::exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace gisim {

using cplx = std::complex<double>;

constexpr double pi = 3.141592653589793238462643383279502884;
constexpr double speed_of_light = 299792458.0; // m/s

// Failure categories. The CLI maps these onto process exit codes, tests
// match on them, so keep the set stable.
enum class errc {
  invalid_argument,
  sampling_violation,
  far_field_violation,
  grid_mismatch,
  size_exceeded,
  out_of_grid,
  insufficient_data,
  misaligned_series,
  invalid_impulse,
  invalid_scheme,
  nondeterministic_source,
  fingerprint_mismatch,
  no_peak,
  config_parse,
  io_failure,
};

class error : public std::runtime_error {
public:
  error(errc k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  errc kind;
};

inline void require(bool ok, errc k, const std::string& msg) {
  if (!ok) throw error(k, msg);
}

struct vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline vec2 operator+(vec2 a, vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline vec2 operator-(vec2 a, vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline vec2 operator*(double s, vec2 a) { return {s * a.x, s * a.y}; }
inline double norm2(vec2 a) { return a.x * a.x + a.y * a.y; }

inline double wavenumber(double lambda0) {
  require(lambda0 > 0.0, errc::invalid_argument, "wavelength must be positive");
  return 2.0 * pi / lambda0;
}

} // namespace gisim

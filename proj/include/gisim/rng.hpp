#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

#include "gisim/common.hpp"

namespace gisim {

// All randomness in a run flows from one master seed.  Named substreams are
// derived by hashing (master, tag, index) through splitmix64 so that source
// frames, detector noise, etc. stay decorrelated and individually
// reproducible no matter what order they are drawn in.

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a, usable incrementally by threading the previous hash through
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t stream_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = fnv1a64(tag.data(), tag.size());
  return splitmix64(splitmix64(master ^ splitmix64(h)) + index);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double normal() { return normal_(eng_); }

  // circular complex gaussian, unit total variance
  cplx cnormal() {
    double re = normal_(eng_);
    double im = normal_(eng_);
    return cplx(re, im) * 0.7071067811865476;
  }

  double uniform01() { return uni_(eng_); }

  // exponential holding time, mean tau
  double exponential(double tau) {
    double u;
    do {
      u = uni_(eng_);
    } while (u <= 0.0);
    return -tau * std::log(u);
  }

  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<std::uint64_t> d(mean);
    return d(eng_);
  }

private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uni_{0.0, 1.0};
};

} // namespace gisim

#pragma once

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "gisim/common.hpp"

namespace gisim {
namespace detail {

// One cached in-place plan pair per transform size, living on a persistent
// fftw-aligned buffer.  Keeping the buffer fixed keeps codelet selection (and
// therefore rounding) identical from run to run; FFTW_ESTIMATE avoids the
// measurement lottery.  Plan creation is not thread safe, execution on
// private buffers is, hence thread_local storage plus a global planner lock.
struct FftSlot {
  int n = 0;
  fftw_complex* buf = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;

  ~FftSlot() {
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
    if (buf) fftw_free(buf);
  }
};

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline FftSlot& fft_slot(int n) {
  thread_local std::map<int, std::unique_ptr<FftSlot>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    auto slot = std::make_unique<FftSlot>();
    slot->n = n;
    slot->buf = fftw_alloc_complex(static_cast<std::size_t>(n) * n);
    require(slot->buf != nullptr, errc::invalid_argument, "fft allocation failed");
    {
      std::lock_guard<std::mutex> lk(planner_mutex());
      slot->fwd = fftw_plan_dft_2d(n, n, slot->buf, slot->buf, FFTW_FORWARD,
                                   FFTW_ESTIMATE);
      slot->bwd = fftw_plan_dft_2d(n, n, slot->buf, slot->buf, FFTW_BACKWARD,
                                   FFTW_ESTIMATE);
    }
    it = cache.emplace(n, std::move(slot)).first;
  }
  return *it->second;
}

// circular shift by n/2 along both axes (its own inverse for even n)
inline void half_shift2(std::vector<cplx>& a, int n) {
  int h = n / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < n; ++x) {
      int x2 = (x + h) % n;
      std::swap(a[static_cast<std::size_t>(y) * n + x],
                a[static_cast<std::size_t>(y + h) * n + x2]);
    }
  }
}

} // namespace detail

// Unnormalized 2D DFT in standard index space:
//   out[k] = sum_j in[j] * exp(sign * 2*pi*i * (kx*jx + ky*jy) / n)
inline void dft2(std::vector<cplx>& a, int n, int sign) {
  require(a.size() == static_cast<std::size_t>(n) * n, errc::grid_mismatch,
          "dft2: buffer does not match size");
  auto& slot = detail::fft_slot(n);
  auto* b = reinterpret_cast<cplx*>(slot.buf);
  std::copy(a.begin(), a.end(), b);
  fftw_execute(sign < 0 ? slot.fwd : slot.bwd);
  std::copy(b, b + a.size(), a.begin());
}

// Centered variant: indices run over kappa = k - n/2 on both sides,
//   out[k] = sum_j in[j] * exp(sign * 2*pi*i * (kappa . iota) / n).
// Realized as shift / dft / shift, exact for even n.
inline void centered_dft2(std::vector<cplx>& a, int n, int sign) {
  detail::half_shift2(a, n);
  dft2(a, n, sign);
  detail::half_shift2(a, n);
}

} // namespace gisim

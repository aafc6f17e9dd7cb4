// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TFI_FFT_HPP_
#define TFI_FFT_HPP_

// Unitary 2-D DFT over each channel of a [C, H, W] tensor, backed by FFTW.
// With the 1/sqrt(HW) normalization on both directions, Parseval holds as a
// plain equality of sums of squares.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "tfi/errors.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

struct Spectrum {
  Shape shape;  // [C, H, W]
  std::vector<std::complex<double>> bins;

  std::complex<double>& at(std::size_t c, std::size_t y, std::size_t x) {
    return bins[(c * shape[1] + y) * shape[2] + x];
  }
  const std::complex<double>& at(std::size_t c, std::size_t y, std::size_t x) const {
    return bins[(c * shape[1] + y) * shape[2] + x];
  }
  double Energy() const {
    double e = 0.0;
    for (const auto& b : bins) e += std::norm(b);
    return e;
  }
};

namespace detail {

// FFTW's planner is not thread-safe; plans are created once under a lock and
// executed concurrently through the new-array interface.
inline fftw_plan PlanFor(int h, int w, int sign) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, fftw_plan> plans;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(h, w, sign);
  if (auto it = plans.find(key); it != plans.end()) return it->second;
  fftw_complex* buf = fftw_alloc_complex(static_cast<std::size_t>(h) * w);
  fftw_plan plan =
      fftw_plan_dft_2d(h, w, buf, buf, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  if (!plan) throw Error("FFTW failed to create a plan");
  plans.emplace(key, plan);
  return plan;
}

inline void Transform2d(std::complex<double>* data, std::size_t h, std::size_t w, int sign) {
  fftw_plan plan = PlanFor(static_cast<int>(h), static_cast<int>(w), sign);
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(plan, p, p);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t i = 0; i < h * w; ++i) data[i] *= scale;
}

inline void RequireImage(const Shape& s, const char* what) {
  if (s.size() != 3) {
    throw ShapeError(std::string(what) + " expects a [C, H, W] tensor, got " + ShapeString(s));
  }
}

}  // namespace detail

inline Spectrum ForwardDft(const Tensor& x) {
  detail::RequireImage(x.shape(), "ForwardDft");
  Spectrum s{x.shape(), std::vector<std::complex<double>>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) s.bins[i] = x[i];
  const std::size_t h = x.shape()[1], w = x.shape()[2];
  for (std::size_t c = 0; c < x.shape()[0]; ++c) {
    detail::Transform2d(s.bins.data() + c * h * w, h, w, FFTW_FORWARD);
  }
  return s;
}

// Real part of the inverse transform.
inline Tensor InverseDft(Spectrum s) {
  const std::size_t h = s.shape[1], w = s.shape[2];
  for (std::size_t c = 0; c < s.shape[0]; ++c) {
    detail::Transform2d(s.bins.data() + c * h * w, h, w, FFTW_BACKWARD);
  }
  Tensor out(s.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.bins[i].real();
  return out;
}

// Signed frequency index in cycles per sample, in [-1/2, 1/2).
inline double SignedFrequency(std::size_t k, std::size_t n) {
  const long kk = static_cast<long>(k);
  const long nn = static_cast<long>(n);
  return static_cast<double>(kk < (nn + 1) / 2 ? kk : kk - nn) / static_cast<double>(nn);
}

// Radial frequency of bin (y, x) in cycles per sample; 0.5 is Nyquist on
// each axis.
inline double RadialFrequency(std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  const double fy = SignedFrequency(y, h);
  const double fx = SignedFrequency(x, w);
  return std::sqrt(fy * fy + fx * fx);
}

}  // namespace tfi

#endif  // TFI_FFT_HPP_

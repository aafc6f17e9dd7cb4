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

#ifndef TFI_FRACTAL_HPP_
#define TFI_FRACTAL_HPP_

// Fractal trigger synthesis and frequency-domain embedding.
//
// A base template with a power-law spectrum is synthesized by shaping white
// noise in the frequency domain, blurred at several scales and mixed, then
// added to a sample's spectrum under a raised-cosine low-pass window whose
// gain follows the client's structural compatibility.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "tfi/errors.hpp"
#include "tfi/fft.hpp"
#include "tfi/random.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

struct FractalTemplateSpec {
  std::uint64_t seed = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 3;
  // Target slope of the power spectrum: P(f) ~ 1 / f^exponent.
  double spectral_exponent = 2.0;

  friend bool operator==(const FractalTemplateSpec&, const FractalTemplateSpec&) = default;
};

struct MultiScaleSpec {
  std::vector<double> sigmas{0.0, 1.0, 2.0};
  std::vector<double> alphas{0.5, 0.3, 0.2};

  std::size_t scale_count() const { return sigmas.size(); }
  friend bool operator==(const MultiScaleSpec&, const MultiScaleSpec&) = default;
};

// Raised-cosine low-pass on radial frequency expressed as a fraction of
// Nyquist: 1 up to `cutoff`, cosine roll-off over `rolloff`, 0 beyond.
struct FrequencyWindow {
  double cutoff = 0.6;
  double rolloff = 0.2;
  bool all_pass = false;

  static FrequencyWindow AllPass() { return {1.0, 0.0, true}; }

  double operator()(double fraction_of_nyquist) const {
    if (all_pass || fraction_of_nyquist <= cutoff) return 1.0;
    if (rolloff <= 0.0 || fraction_of_nyquist >= cutoff + rolloff) return 0.0;
    return 0.5 * (1.0 + std::cos(M_PI * (fraction_of_nyquist - cutoff) / rolloff));
  }

  friend bool operator==(const FrequencyWindow&, const FrequencyWindow&) = default;
};

struct EmbeddingSpec {
  double eps_base = 0.0;
  double compat_exponent = 0.5;
  FrequencyWindow window;
  double scc = 1.0;

  // Spatially uniform part of the gain: eps_base * scc^compat_exponent.
  double Gain() const { return eps_base * std::pow(scc, compat_exponent); }

  void Validate() const {
    if (!(eps_base >= 0.0) || !std::isfinite(eps_base)) {
      throw ConfigError("embedding strength must be finite and non-negative");
    }
    if (!(compat_exponent > 0.0 && compat_exponent < 1.0)) {
      throw ConfigError("compat_exponent must lie strictly inside (0, 1)");
    }
    if (!(scc > 0.0) || !std::isfinite(scc)) throw ConfigError("scc must be positive");
    if (!window.all_pass && !(window.cutoff > 0.0 && window.cutoff <= 1.0)) {
      throw ConfigError("window cutoff must lie in (0, 1]");
    }
    if (!(window.rolloff >= 0.0)) throw ConfigError("window rolloff must be non-negative");
  }

  friend bool operator==(const EmbeddingSpec&, const EmbeddingSpec&) = default;
};

struct TriggerSpec {
  FractalTemplateSpec template_spec;
  MultiScaleSpec scales;
  EmbeddingSpec embedding;
  // Side of the square static patch in the bottom-right corner.
  std::size_t static_patch = 3;

  friend bool operator==(const TriggerSpec&, const TriggerSpec&) = default;
};

inline Tensor GenerateTemplate(const FractalTemplateSpec& spec) {
  if (spec.height < 4 || spec.width < 4 || spec.channels == 0) {
    throw ShapeError("fractal template needs H, W >= 4 and at least one channel");
  }
  if (!(spec.spectral_exponent > 0.0)) throw ConfigError("spectral_exponent must be positive");
  const std::size_t h = spec.height, w = spec.width;
  Tensor noise({spec.channels, h, w});
  for (std::size_t c = 0; c < spec.channels; ++c) {
    Rng rng = MakeRng(spec.seed, "fractal-template", {c});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < h * w; ++i) noise[c * h * w + i] = normal(rng);
  }
  // White noise has a Hermitian spectrum of unit-variance complex Gaussians;
  // shaping it by a real even amplitude keeps the result real.
  Spectrum s = ForwardDft(noise);
  for (std::size_t c = 0; c < spec.channels; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double f = RadialFrequency(y, x, h, w);
        s.at(c, y, x) *= f > 0.0 ? std::pow(f, -0.5 * spec.spectral_exponent) : 0.0;
      }
    }
  }
  Tensor out = InverseDft(std::move(s));
  const double mean = out.Mean();
  for (double& v : out.values()) v -= mean;
  const double norm = out.Norm();
  if (norm == 0.0) throw DegenerateError("fractal template has zero energy");
  out *= 1.0 / norm;
  return out;
}

// Discrete Gaussian (radius ceil(4 sigma), unit sum) applied separably with
// periodic boundaries. sigma == 0 is the identity.
inline Tensor GaussianBlur(const Tensor& x, double sigma) {
  if (x.rank() != 3) throw ShapeError("GaussianBlur expects [C, H, W]");
  if (sigma < 0.0) throw ConfigError("blur scale must be non-negative");
  if (sigma == 0.0) return x;
  const long radius = static_cast<long>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;
  const long c = static_cast<long>(x.shape()[0]), h = static_cast<long>(x.shape()[1]),
             w = static_cast<long>(x.shape()[2]);
  auto wrap = [](long i, long n) { return ((i % n) + n) % n; };
  Tensor rows(x.shape());
  for (long ch = 0; ch < c; ++ch)
    for (long y = 0; y < h; ++y)
      for (long xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (long k = -radius; k <= radius; ++k) s += kernel[k + radius] * x.at(ch, y, wrap(xx + k, w));
        rows.at(ch, y, xx) = s;
      }
  Tensor out(x.shape());
  for (long ch = 0; ch < c; ++ch)
    for (long y = 0; y < h; ++y)
      for (long xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (long k = -radius; k <= radius; ++k) s += kernel[k + radius] * rows.at(ch, wrap(y + k, h), xx);
        out.at(ch, y, xx) = s;
      }
  return out;
}

inline void ValidateScales(const MultiScaleSpec& scales) {
  if (scales.sigmas.empty()) throw ConfigError("multi-scale spec needs at least one scale");
  if (scales.sigmas.size() != scales.alphas.size()) {
    throw ConfigError("sigmas and alphas must have the same length");
  }
  for (double s : scales.sigmas) {
    if (!(s >= 0.0)) throw ConfigError("blur scales must be non-negative");
  }
}

// Weighted sum of blurred copies, without renormalization.
inline Tensor ComposeMultiscaleRaw(const Tensor& base, const MultiScaleSpec& scales) {
  ValidateScales(scales);
  if (!base.AllFinite()) throw NumericalError("fractal template is not finite");
  Tensor out(base.shape());
  for (std::size_t k = 0; k < scales.scale_count(); ++k) {
    if (scales.alphas[k] == 0.0) continue;
    out += GaussianBlur(base, scales.sigmas[k]) * scales.alphas[k];
  }
  return out;
}

// Multi-scale composition renormalized to unit L2 norm.
inline Tensor ComposeMultiscale(const Tensor& base, const MultiScaleSpec& scales) {
  Tensor out = ComposeMultiscaleRaw(base, scales);
  const double norm = out.Norm();
  if (!(norm > 1e-300)) throw DegenerateError("multi-scale composition is all zero");
  out *= 1.0 / norm;
  return out;
}

// Constant square patch in the bottom-right corner across all channels,
// scaled to the requested L2 norm.
inline Tensor StaticPatch(const Shape& shape, std::size_t patch, double norm) {
  if (shape.size() != 3) throw ShapeError("static patch expects [C, H, W]");
  if (patch == 0 || patch > shape[1] || patch > shape[2]) {
    throw ConfigError("static patch does not fit the image");
  }
  const double value = norm / std::sqrt(static_cast<double>(patch * patch * shape[0]));
  Tensor out(shape);
  for (std::size_t c = 0; c < shape[0]; ++c)
    for (std::size_t y = shape[1] - patch; y < shape[1]; ++y)
      for (std::size_t x = shape[2] - patch; x < shape[2]; ++x) out.at(c, y, x) = value;
  return out;
}

enum class TriggerSource { kFractal, kStatic };

// A materialized trigger: the unit-norm fractal perturbation and its
// energy-matched static counterpart.
class Trigger {
 public:
  explicit Trigger(TriggerSpec spec) : spec_(std::move(spec)) {
    spec_.embedding.Validate();
    base_ = GenerateTemplate(spec_.template_spec);
    fractal_ = ComposeMultiscale(base_, spec_.scales);
    static_ = StaticPatch(fractal_.shape(), spec_.static_patch, fractal_.Norm());
  }

  const TriggerSpec& spec() const { return spec_; }
  const Tensor& base() const { return base_; }
  const Tensor& fractal() const { return fractal_; }
  const Tensor& static_patch() const { return static_; }
  const Tensor& perturbation(TriggerSource source) const {
    return source == TriggerSource::kFractal ? fractal_ : static_;
  }

 private:
  TriggerSpec spec_;
  Tensor base_;
  Tensor fractal_;
  Tensor static_;
};

namespace detail {

inline Spectrum WeightedSpectrum(const Tensor& delta, const EmbeddingSpec& emb) {
  Spectrum d = ForwardDft(delta);
  const double gain = emb.Gain();
  const std::size_t c = d.shape[0], h = d.shape[1], w = d.shape[2];
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double beta = gain * emb.window(RadialFrequency(y, x, h, w) / 0.5);
      for (std::size_t ch = 0; ch < c; ++ch) d.at(ch, y, x) *= beta;
    }
  return d;
}

}  // namespace detail

// Inverse transform of X(w) + beta(w) D(w), before clamping.
inline Tensor EmbedUnclamped(const Tensor& x, const Tensor& delta, const EmbeddingSpec& emb) {
  x.RequireSameShape(delta, "embed");
  emb.Validate();
  if (emb.eps_base == 0.0) return x;
  Spectrum xs = ForwardDft(x);
  const Spectrum ds = detail::WeightedSpectrum(delta, emb);
  for (std::size_t i = 0; i < xs.bins.size(); ++i) {
    xs.bins[i] += ds.bins[i];
    if (!std::isfinite(xs.bins[i].real()) || !std::isfinite(xs.bins[i].imag())) {
      throw NumericalError("non-finite spectrum during embedding");
    }
  }
  return InverseDft(std::move(xs));
}

// Poisoned sample clamped to the valid input range [0, 1].
inline Tensor Embed(const Tensor& x, const Tensor& delta, const EmbeddingSpec& emb) {
  if (emb.eps_base == 0.0) {
    x.RequireSameShape(delta, "embed");
    return x;
  }
  Tensor out = EmbedUnclamped(x, delta, emb);
  out.Clamp(0.0, 1.0);
  return out;
}

// The spatial perturbation the embedding adds (pre-clamp), independent of x.
inline Tensor EffectivePerturbation(const Tensor& delta, const EmbeddingSpec& emb) {
  emb.Validate();
  if (emb.eps_base == 0.0) return Tensor(delta.shape());
  return InverseDft(detail::WeightedSpectrum(delta, emb));
}

inline constexpr std::size_t kSpectralBands = 8;
inline constexpr double kDominantBandShare = 0.05;

struct SpectralReport {
  std::vector<double> band_energy;  // fractions summing to 1
  int dominant_band_count = 0;
  double psnr = 0.0;
};

// Peak signal-to-noise ratio for signals in [0, 1]; +inf for identical
// inputs.
inline double Psnr(const Tensor& a, const Tensor& b) {
  a.RequireSameShape(b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

// Band index of each DFT bin: eight equal-width radial bands spanning
// [0, largest radial frequency present].
inline std::vector<std::size_t> RadialBands(std::size_t h, std::size_t w) {
  double rmax = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) rmax = std::max(rmax, RadialFrequency(y, x, h, w));
  std::vector<std::size_t> band(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double r = RadialFrequency(y, x, h, w) / rmax;
      band[y * w + x] = std::min(kSpectralBands - 1, static_cast<std::size_t>(r * kSpectralBands));
    }
  return band;
}

inline SpectralReport AnalyzeSpectrum(const Tensor& delta, const Tensor& x) {
  if (!delta.AllFinite()) throw NumericalError("perturbation is not finite");
  const Spectrum s = ForwardDft(delta);
  const std::size_t h = s.shape[1], w = s.shape[2];
  const std::vector<std::size_t> band = RadialBands(h, w);
  SpectralReport report;
  report.band_energy.assign(kSpectralBands, 0.0);
  for (std::size_t c = 0; c < s.shape[0]; ++c)
    for (std::size_t i = 0; i < h * w; ++i) report.band_energy[band[i]] += std::norm(s.bins[c * h * w + i]);
  double total = 0.0;
  for (double e : report.band_energy) total += e;
  if (!(total > 0.0)) throw DegenerateError("perturbation has zero energy");
  for (double& e : report.band_energy) {
    e /= total;
    if (e > kDominantBandShare) ++report.dominant_band_count;
  }
  report.psnr = Psnr(x, x + delta);
  return report;
}

}  // namespace tfi

#endif  // TFI_FRACTAL_HPP_

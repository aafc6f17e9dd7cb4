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

#ifndef TFI_STRUCTMETRICS_HPP_
#define TFI_STRUCTMETRICS_HPP_

// Structural response scores: the exact layer-response form built from input
// Jacobians at the taps, and the cheap gradient-norm probe estimates used
// to rank clients.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tfi/errors.hpp"
#include "tfi/net.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

inline constexpr double kDefaultConnectivityBonus = 1.5;
inline constexpr std::size_t kDefaultProbeCount = 32;
// Static probe estimates at or below this make a client's SCC unknown.
inline constexpr double kSccDenominatorFloor = 1e-9;

struct SrsConfig {
  std::vector<double> layer_weights;
  double connectivity_bonus = kDefaultConnectivityBonus;
};

// Weight l / sum(l) for tap l (1-based depth), times `bonus` when the tap is
// fed by an add or concat junction, renormalized to sum to one.
inline SrsConfig LayerWeights(const ArchitectureGraph& arch, double bonus) {
  if (!(bonus >= 1.0)) throw ConfigError("connectivity bonus must be >= 1");
  const std::size_t taps = arch.tap_count();
  if (taps == 0) throw ConfigError("architecture has no taps");
  SrsConfig cfg{std::vector<double>(taps), bonus};
  double total = 0.0;
  for (std::size_t l = 0; l < taps; ++l) {
    double w = static_cast<double>(l + 1);
    if (arch.IsSkipFed(l)) w *= bonus;
    cfg.layer_weights[l] = w;
    total += w;
  }
  for (double& w : cfg.layer_weights) w /= total;
  return cfg;
}

// Sum over taps of alpha_l times the tap's input-Jacobian norm at x + delta,
// averaged over `xs`.
inline double ComputeSrs(const Network& net, std::span<const Tensor> xs, const Tensor& delta,
                         const SrsConfig& cfg) {
  if (xs.empty()) throw ConfigError("compute_srs needs at least one sample");
  if (cfg.layer_weights.size() != net.arch().tap_count()) {
    throw ConfigError("layer weight count differs from tap count");
  }
  double total = 0.0;
  for (const Tensor& x : xs) {
    double srs = 0.0;
    for (std::size_t l = 0; l < cfg.layer_weights.size(); ++l) {
      if (cfg.layer_weights[l] == 0.0) continue;
      srs += cfg.layer_weights[l] * InputJacobianNorm(net, x, delta, l);
    }
    total += srs;
  }
  return total / static_cast<double>(xs.size());
}

struct StructureScore {
  double srs_fractal = 0.0;
  double srs_static = 0.0;
  double scc = 1.0;
};

inline StructureScore ComputeScc(const Network& net, std::span<const Tensor> xs,
                                 const Tensor& delta_fractal, const Tensor& delta_static,
                                 const SrsConfig& cfg) {
  StructureScore s;
  s.srs_fractal = ComputeSrs(net, xs, delta_fractal, cfg);
  s.srs_static = ComputeSrs(net, xs, delta_static, cfg);
  if (!(s.srs_static > 0.0)) throw DegenerateError("static-trigger SRS is zero");
  s.scc = s.srs_fractal / s.srs_static;
  return s;
}

struct ProbeSet {
  std::vector<Tensor> inputs;
  std::vector<LossTarget> labels;

  std::size_t size() const { return inputs.size(); }
  void Validate() const {
    if (inputs.empty()) throw ConfigError("probe set is empty");
    if (inputs.size() != labels.size()) throw ShapeError("probe inputs and labels differ in count");
  }
};

namespace detail {

inline double ParamGradientNorm(const Network& net, const Tensor& x, const LossTarget& label,
                                std::vector<double>& scratch) {
  scratch.assign(net.params().size(), 0.0);
  AccumulateGradient(net, x, label, scratch);
  const double norm = vec::Norm(scratch);
  if (!std::isfinite(norm)) throw NumericalError("non-finite probe gradient");
  return norm;
}

inline std::vector<double> CleanGradientNorms(const Network& net, const ProbeSet& probe) {
  std::vector<double> scratch;
  std::vector<double> out(probe.size());
  for (std::size_t j = 0; j < probe.size(); ++j) {
    out[j] = ParamGradientNorm(net, probe.inputs[j], probe.labels[j], scratch);
  }
  return out;
}

inline double EstimateSrsWithClean(const Network& net, const ProbeSet& probe, const Tensor& delta,
                                   std::span<const double> clean) {
  std::vector<double> scratch;
  double total = 0.0;
  for (std::size_t j = 0; j < probe.size(); ++j) {
    probe.inputs[j].RequireSameShape(delta, "estimate_srs");
    if (delta.SquaredNorm() == 0.0) continue;
    total += ParamGradientNorm(net, probe.inputs[j] + delta, probe.labels[j], scratch) - clean[j];
  }
  return total / static_cast<double>(probe.size());
}

}  // namespace detail

// Mean over the probe set of the parameter-gradient norm on x + delta minus
// the norm on x. May be negative.
inline double EstimateSrs(const Network& net, const ProbeSet& probe, const Tensor& delta) {
  probe.Validate();
  return detail::EstimateSrsWithClean(net, probe, delta, detail::CleanGradientNorms(net, probe));
}

struct SccEstimate {
  double srs_fractal = 0.0;
  double srs_static = 0.0;
  // Empty when the static estimate is at or below kSccDenominatorFloor.
  std::optional<double> scc;
};

inline std::optional<double> SccFromEstimates(double srs_fractal, double srs_static) {
  if (!(srs_static > kSccDenominatorFloor)) return std::nullopt;
  return srs_fractal / srs_static;
}

inline SccEstimate EstimateScc(const Network& net, const ProbeSet& probe,
                               const Tensor& delta_fractal, const Tensor& delta_static) {
  probe.Validate();
  const std::vector<double> clean = detail::CleanGradientNorms(net, probe);
  SccEstimate e;
  e.srs_fractal = detail::EstimateSrsWithClean(net, probe, delta_fractal, clean);
  e.srs_static = detail::EstimateSrsWithClean(net, probe, delta_static, clean);
  e.scc = SccFromEstimates(e.srs_fractal, e.srs_static);
  return e;
}

}  // namespace tfi

#endif  // TFI_STRUCTMETRICS_HPP_

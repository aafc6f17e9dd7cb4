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

#ifndef TFI_ATTACKS_HPP_
#define TFI_ATTACKS_HPP_

// The TFI attack orchestration (client valuation, budgeted greedy selection,
// temporal intensity schedule, adaptive strength, batch poisoning) and the
// model-replacement, distributed-backdoor and label-poisoning baselines.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfi/errors.hpp"
#include "tfi/federation.hpp"
#include "tfi/fractal.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

enum class AttackMethod { kNone, kTfi, kMr, kDba, kLp };

inline std::string_view AttackMethodName(AttackMethod m) {
  switch (m) {
    case AttackMethod::kNone: return "none";
    case AttackMethod::kTfi: return "tfi";
    case AttackMethod::kMr: return "mr";
    case AttackMethod::kDba: return "dba";
    case AttackMethod::kLp: return "lp";
  }
  return "?";
}

inline AttackMethod ParseAttackMethod(std::string_view name) {
  for (AttackMethod m : {AttackMethod::kNone, AttackMethod::kTfi, AttackMethod::kMr,
                         AttackMethod::kDba, AttackMethod::kLp}) {
    if (AttackMethodName(m) == name) return m;
  }
  throw ConfigError("unknown attack method '" + std::string(name) + "'");
}

// V_i = gamma_i * SCC_hat; empty when the SCC estimate is unknown.
inline std::optional<double> ClientValue(double aggregation_weight, std::optional<double> scc) {
  if (!scc || !std::isfinite(*scc)) return std::nullopt;
  return aggregation_weight * *scc;
}

struct AttackBudget {
  std::optional<std::size_t> max_malicious;
  std::optional<double> max_total_weight;

  void Validate(std::size_t n_clients) const {
    if (!max_malicious && !max_total_weight) throw ConfigError("attack budget has no bound");
    if (max_malicious && *max_malicious > n_clients) {
      throw ConfigError("attack budget exceeds the client count");
    }
    if (max_total_weight && !(*max_total_weight > 0.0)) {
      throw ConfigError("attack weight cap must be positive");
    }
  }
};

struct Candidate {
  int id = 0;
  double weight = 0.0;
  double value = 0.0;
};

// Greedy by descending value (ties to the lower id). Stops once the count
// bound is reached; candidates that would push the total weight over the
// cap are skipped. Returned ids are ascending.
inline std::vector<int> SelectClients(std::vector<Candidate> candidates,
                                      const AttackBudget& budget) {
  if (candidates.empty()) throw ConfigError("no valued clients to select from");
  if (!budget.max_malicious && !budget.max_total_weight) {
    throw ConfigError("attack budget has no bound");
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.value != b.value ? a.value > b.value : a.id < b.id;
  });
  std::vector<int> selected;
  double weight = 0.0;
  for (const Candidate& c : candidates) {
    if (budget.max_malicious && selected.size() >= *budget.max_malicious) break;
    if (budget.max_total_weight && weight + c.weight > *budget.max_total_weight * (1.0 + 1e-12)) {
      continue;
    }
    selected.push_back(c.id);
    weight += c.weight;
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

// eps0 * min(2, srs_ref / srs_hat).
inline double BaseStrength(double srs_hat, double eps0, double srs_ref) {
  if (!(srs_hat > 0.0)) throw ConfigError("base strength needs a positive SRS estimate");
  if (!(srs_ref > 0.0)) throw ConfigError("base strength needs a positive reference SRS");
  return eps0 * std::min(2.0, srs_ref / srs_hat);
}

struct TemporalSchedule {
  double i_max = 1.0;
  double lambda = 0.1;

  void Validate() const {
    if (!(i_max > 0.0) || !(lambda > 0.0)) throw ConfigError("schedule needs i_max > 0, lambda > 0");
  }

  // I(t) = I_max (1 - exp(-lambda t)).
  double Intensity(double t) const {
    if (t < 0.0) throw ConfigError("intensity needs t >= 0");
    return i_max * -std::expm1(-lambda * t);
  }
};

// eps_base * (V_i / V_bar) * I(t) / n_attackers.
inline double RoundStrength(double eps_base, double value, double mean_value, double intensity,
                            std::size_t n_attackers) {
  if (n_attackers == 0) return 0.0;
  if (!(mean_value > 0.0)) throw ConfigError("round strength needs a positive mean value");
  return eps_base * (value / mean_value) * intensity / static_cast<double>(n_attackers);
}

// ceil(fraction * batch), robust to representation error in the product.
inline std::size_t PoisonCount(double fraction, std::size_t batch) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("poison fraction must lie in [0, 1]");
  const double raw = fraction * static_cast<double>(batch);
  return std::min(batch, static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw))));
}

// Adds a precomputed perturbation and clamps to [0, 1]. Equivalent to the
// frequency-domain embedding because the transform is linear.
inline Tensor ApplyPerturbation(const Tensor& x, const Tensor& perturbation) {
  Tensor out = x + perturbation;
  out.Clamp(0.0, 1.0);
  return out;
}

// Embeds the first ceil(fraction * |batch|) samples with strength `eps` and
// relabels them to `target_class`.
inline void PoisonBatchTfi(std::vector<Example>& batch, const Tensor& fractal,
                           EmbeddingSpec embedding, double eps, int target_class,
                           double poison_fraction) {
  if (!(eps >= 0.0)) throw ConfigError("poisoning strength must be non-negative");
  const std::size_t k = PoisonCount(poison_fraction, batch.size());
  if (k == 0) return;
  embedding.eps_base = eps;
  const Tensor p = EffectivePerturbation(fractal, embedding);
  const bool zero = eps == 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    if (!zero) batch[j].input = ApplyPerturbation(batch[j].input, p);
    batch[j].target = target_class;
  }
}

// Update that moves a FedAvg aggregate onto `w_target` when this client is
// the only non-zero contributor with normalized weight gamma.
inline std::vector<double> ModelReplacementUpdate(std::span<const double> w_target,
                                                  std::span<const double> w_global, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("model replacement needs gamma > 0");
  if (w_target.size() != w_global.size()) throw ShapeError("model replacement length mismatch");
  std::vector<double> out(w_target.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (w_target[i] - w_global[i]) / gamma;
  return out;
}

// Mask of quadrant `q` (0 top-left, 1 top-right, 2 bottom-left, 3
// bottom-right) of the patch's bounding box; rows split at ceil(h / 2),
// columns at ceil(w / 2).
inline Tensor PatchQuadrant(const Tensor& patch, int q) {
  if (q < 0 || q > 3) throw ConfigError("DBA quadrant must lie in 0..3");
  if (patch.rank() != 3) throw ShapeError("patch must be [C, H, W]");
  const std::size_t c = patch.shape()[0], h = patch.shape()[1], w = patch.shape()[2];
  std::size_t y0 = h, y1 = 0, x0 = w, x1 = 0;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        if (patch.at(ch, y, x) == 0.0) continue;
        y0 = std::min(y0, y), y1 = std::max(y1, y + 1);
        x0 = std::min(x0, x), x1 = std::max(x1, x + 1);
      }
  Tensor out(patch.shape());
  if (y0 >= y1) return out;
  const std::size_t ys = y0 + (y1 - y0 + 1) / 2;
  const std::size_t xs = x0 + (x1 - x0 + 1) / 2;
  const bool bottom = q >= 2, right = q % 2 == 1;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = bottom ? ys : y0; y < (bottom ? y1 : ys); ++y)
      for (std::size_t x = right ? xs : x0; x < (right ? x1 : xs); ++x)
        out.at(ch, y, x) = patch.at(ch, y, x);
  return out;
}

// Stamps quadrant `q` of `patch` additively (then clamps) on the first
// ceil(fraction * |batch|) samples and relabels them.
inline void PoisonBatchDba(std::vector<Example>& batch, const Tensor& patch, int q,
                           int target_class, double poison_fraction) {
  const std::size_t k = PoisonCount(poison_fraction, batch.size());
  if (k == 0) return;
  const Tensor part = PatchQuadrant(patch, q);
  for (std::size_t j = 0; j < k; ++j) {
    batch[j].input = ApplyPerturbation(batch[j].input, part);
    batch[j].target = target_class;
  }
}

// Relabels the first ceil(flip_fraction * |batch|) samples; inputs untouched.
inline void PoisonBatchLabels(std::vector<Example>& batch, double flip_fraction, int target_class) {
  const std::size_t k = PoisonCount(flip_fraction, batch.size());
  for (std::size_t j = 0; j < k; ++j) batch[j].target = target_class;
}

}  // namespace tfi

#endif  // TFI_ATTACKS_HPP_

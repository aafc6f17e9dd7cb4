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

#ifndef TFI_FEDERATION_HPP_
#define TFI_FEDERATION_HPP_

// Federated training: Dirichlet non-IID partitioning, participant sampling,
// momentum-SGD local training and the aggregation rules (FedAvg, Krum,
// coordinate-wise trimmed mean, clip-and-noise DP).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tfi/data.hpp"
#include "tfi/errors.hpp"
#include "tfi/net.hpp"
#include "tfi/random.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

struct ClientProfile {
  int id = 0;
  // Shard size over training-set size; renormalized over each round's
  // participants at aggregation time.
  double aggregation_weight = 0.0;
  std::vector<std::size_t> shard;
  bool malicious = false;
  std::optional<double> srs_hat;
  std::optional<double> scc_hat;
  std::optional<double> value;
};

struct PartitionSpec {
  std::size_t n_clients = 100;
  double dirichlet_alpha = 0.5;
  std::uint64_t seed = 1;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

// Per class, draws client proportions from Dirichlet(alpha) and deals the
// (shuffled) class indices accordingly. Clients left empty take one sample
// from the currently largest client.
inline std::vector<ClientProfile> Partition(std::span<const int> labels, std::size_t classes,
                                            const PartitionSpec& spec) {
  const std::size_t n = spec.n_clients;
  if (n == 0) throw ConfigError("partition needs at least one client");
  if (labels.size() < n) {
    throw ConfigError("too few samples (" + std::to_string(labels.size()) + ") for " +
                      std::to_string(n) + " clients");
  }
  if (!(spec.dirichlet_alpha > 0.0)) throw ConfigError("dirichlet_alpha must be positive");
  Rng rng = MakeRng(spec.seed, "partition");
  std::vector<std::vector<std::size_t>> shards(n);
  std::gamma_distribution<double> gamma(spec.dirichlet_alpha, 1.0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == static_cast<int>(c)) idx.push_back(i);
    }
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<double> p(n);
    double total = 0.0;
    for (double& v : p) total += (v = gamma(rng));
    if (!(total > 0.0)) {
      std::fill(p.begin(), p.end(), 1.0);
      total = static_cast<double>(n);
    }
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < n; ++k) {
      cum += p[k] / total;
      const std::size_t end =
          k + 1 == n ? idx.size()
                     : std::min(idx.size(), static_cast<std::size_t>(std::floor(cum * idx.size())));
      for (std::size_t j = start; j < end; ++j) shards[k].push_back(idx[j]);
      start = std::max(start, end);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!shards[k].empty()) continue;
    std::size_t largest = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (shards[j].size() > shards[largest].size()) largest = j;
    }
    shards[k].push_back(shards[largest].back());
    shards[largest].pop_back();
  }
  std::vector<ClientProfile> clients(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::sort(shards[k].begin(), shards[k].end());
    clients[k].id = static_cast<int>(k);
    clients[k].aggregation_weight =
        static_cast<double>(shards[k].size()) / static_cast<double>(labels.size());
    clients[k].shard = std::move(shards[k]);
  }
  return clients;
}

// Uniform draw without replacement of round(fraction * n) clients, keyed by
// (master seed, round). Returned ids are ascending.
inline std::vector<int> SampleParticipants(std::size_t n_clients, double fraction,
                                           std::uint64_t master_seed, int round) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("participation fraction must lie in (0, 1]");
  }
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_clients)));
  if (k < 1) throw ConfigError("participation fraction selects no clients");
  std::vector<int> ids(n_clients);
  std::iota(ids.begin(), ids.end(), 0);
  if (k >= n_clients) return ids;
  Rng rng = MakeRng(master_seed, "participants", {static_cast<std::uint64_t>(round)});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_clients - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct TrainingConfig {
  int local_epochs = 5;
  std::size_t batch_size = 32;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double participation_fraction = 0.1;
  int rounds = 100;

  void Validate() const {
    if (local_epochs < 1 || batch_size < 1 || rounds < 0) {
      throw ConfigError("local_epochs and batch_size must be positive, rounds non-negative");
    }
    if (lr < 0.0 || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0) {
      throw ConfigError("lr, momentum in [0, 1), weight_decay must be non-negative");
    }
    if (!(participation_fraction > 0.0 && participation_fraction <= 1.0)) {
      throw ConfigError("participation_fraction must lie in (0, 1]");
    }
  }

  // Step decay x0.1 once half of the rounds have passed and again at three
  // quarters. `round` is 1-based.
  double LearningRate(int round) const {
    const double progress = static_cast<double>(round - 1) / std::max(1, rounds);
    double rate = lr;
    if (progress >= 0.5) rate *= 0.1;
    if (progress >= 0.75) rate *= 0.1;
    return rate;
  }

  friend bool operator==(const TrainingConfig&, const TrainingConfig&) = default;
};

struct Example {
  Tensor input;
  LossTarget target;
};

// Rewrites a training batch in place before the optimizer step.
using Poisoner = std::function<void(std::vector<Example>&)>;

struct ClientUpdate {
  std::vector<double> delta;
  double mean_loss = 0.0;
  std::size_t steps = 0;
};

// Momentum SGD (v <- mu v + g + lambda w; w <- w - lr v) over `examples`
// for the configured number of epochs, batches shuffled with `seed`.
inline ClientUpdate LocalTrain(const Network& global, std::span<const Example> examples,
                               const TrainingConfig& cfg, double lr, std::uint64_t seed,
                               const Poisoner* poisoner = nullptr) {
  if (examples.empty()) throw ConfigError("client shard is empty");
  Network local = global;
  std::span<double> w = local.mutable_values();
  std::vector<double> velocity(w.size(), 0.0);
  std::vector<double> grad(w.size());
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  ClientUpdate out;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<Example> batch;
      batch.reserve(end - start);
      for (std::size_t j = start; j < end; ++j) batch.push_back(examples[order[j]]);
      if (poisoner) (*poisoner)(batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (const Example& ex : batch) {
        loss_sum += AccumulateGradient(local, ex.input, ex.target, grad);
        ++loss_count;
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = grad[i] * inv + cfg.weight_decay * w[i];
        velocity[i] = cfg.momentum * velocity[i] + g;
        w[i] -= lr * velocity[i];
      }
      ++out.steps;
    }
  }
  out.delta.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.delta[i] = w[i] - global.params().values[i];
    if (!std::isfinite(out.delta[i])) throw NumericalError("local training diverged");
  }
  out.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
  return out;
}

inline std::vector<Example> ShardExamples(const Dataset& data, std::span<const std::size_t> shard) {
  std::vector<Example> out;
  out.reserve(shard.size());
  for (std::size_t i : shard) out.push_back({data.images[i], data.labels[i]});
  return out;
}

struct AggregationRule {
  enum class Kind { kFedAvg, kKrum, kTrimmedMean, kDp };
  Kind kind = Kind::kFedAvg;
  int byzantine = 0;           // Krum f
  double trim_fraction = 0.0;  // per tail
  double clip_norm = 1.0;      // DP C
  double noise_sigma = 0.0;    // DP sigma

  static AggregationRule FedAvg() { return {}; }
  static AggregationRule Krum(int f) { return {Kind::kKrum, f}; }
  static AggregationRule TrimmedMean(double beta) { return {Kind::kTrimmedMean, 0, beta}; }
  static AggregationRule Dp(double clip, double sigma) { return {Kind::kDp, 0, 0.0, clip, sigma}; }

  void Validate() const {
    if (kind == Kind::kKrum && byzantine < 0) throw ConfigError("krum byzantine count must be >= 0");
    if (kind == Kind::kTrimmedMean && !(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
      throw ConfigError("trim_fraction must lie in [0, 0.5)");
    }
    if (kind == Kind::kDp && (!(clip_norm > 0.0) || !(noise_sigma >= 0.0))) {
      throw ConfigError("dp needs clip_norm > 0 and noise_sigma >= 0");
    }
  }
};

inline std::string_view AggregationName(AggregationRule::Kind kind) {
  switch (kind) {
    case AggregationRule::Kind::kFedAvg: return "fedavg";
    case AggregationRule::Kind::kKrum: return "krum";
    case AggregationRule::Kind::kTrimmedMean: return "trimmed_mean";
    case AggregationRule::Kind::kDp: return "dp";
  }
  return "?";
}

namespace detail {

inline void RequireUpdates(const std::vector<std::vector<double>>& updates) {
  if (updates.empty()) throw ConfigError("no updates to aggregate");
  for (const auto& u : updates) {
    if (u.size() != updates[0].size()) throw ShapeError("updates have different lengths");
  }
}

inline bool ScoreLess(double a, double b) {
  return a < b && (b - a) > 1e-12 * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

// Krum scores: sum of squared distances to the n - f - 2 nearest other
// updates.
inline std::vector<double> KrumScores(const std::vector<std::vector<double>>& updates, int f) {
  detail::RequireUpdates(updates);
  const std::size_t n = updates.size();
  if (f < 0 || n < static_cast<std::size_t>(f) + 3) {
    throw ConfigError("krum needs n >= f + 3 (n = " + std::to_string(n) +
                      ", f = " + std::to_string(f) + ")");
  }
  const std::size_t keep = n - static_cast<std::size_t>(f) - 2;
  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dist[i][j] = dist[j][i] = vec::SquaredDistance(updates[i], updates[j]);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) d.push_back(dist[i][j]);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(keep), d.end());
    scores[i] = std::accumulate(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(keep), 0.0);
  }
  return scores;
}

// Index of the lowest Krum score; scores equal to within 1e-12 relative are
// ties, resolved toward the lowest index.
inline std::size_t KrumSelect(const std::vector<std::vector<double>>& updates, int f) {
  const std::vector<double> scores = KrumScores(updates, f);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (detail::ScoreLess(scores[i], scores[best])) best = i;
  }
  return best;
}

inline std::vector<double> TrimmedMean(const std::vector<std::vector<double>>& updates,
                                       double trim_fraction) {
  detail::RequireUpdates(updates);
  const std::size_t n = updates.size();
  const auto cut = static_cast<std::size_t>(std::floor(trim_fraction * static_cast<double>(n)));
  if (2 * cut >= n) throw ConfigError("trim fraction removes every update");
  std::vector<double> out(updates[0].size());
  std::vector<double> column(n);
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) column[i] = updates[i][k];
    if (cut > 0) std::sort(column.begin(), column.end());
    double s = 0.0;
    for (std::size_t i = cut; i < n - cut; ++i) s += column[i];
    out[k] = s / static_cast<double>(n - 2 * cut);
  }
  return out;
}

struct AggregateResult {
  std::vector<double> params;
  std::vector<double> applied_update;
  // xi: DP noise norm, or the distance between a robust aggregate and the
  // plain weighted mean.
  double noise_magnitude = 0.0;
  std::optional<std::size_t> krum_index;
};

inline std::vector<double> WeightedSum(const std::vector<std::vector<double>>& updates,
                                       std::span<const double> weights) {
  std::vector<double> out(updates[0].size(), 0.0);
  for (std::size_t i = 0; i < updates.size(); ++i) vec::Axpy(weights[i], updates[i], out);
  return out;
}

inline std::vector<double> NormalizeWeights(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ConfigError("aggregation weights must be positive");
    total += w;
  }
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= total;
  return out;
}

// `weights` are renormalized over the given updates (FedAvg only).
inline AggregateResult Aggregate(std::span<const double> global,
                                 const std::vector<std::vector<double>>& updates,
                                 std::span<const double> weights, const AggregationRule& rule,
                                 Rng& noise_rng) {
  detail::RequireUpdates(updates);
  rule.Validate();
  if (updates[0].size() != global.size()) throw ShapeError("update length differs from model");
  if (weights.size() != updates.size()) throw ShapeError("one weight per update is required");
  const std::vector<double> gamma = NormalizeWeights(weights);
  const std::vector<double> fedavg = WeightedSum(updates, gamma);
  AggregateResult out;
  switch (rule.kind) {
    case AggregationRule::Kind::kFedAvg:
      out.applied_update = fedavg;
      break;
    case AggregationRule::Kind::kKrum: {
      const std::size_t idx = KrumSelect(updates, rule.byzantine);
      out.krum_index = idx;
      out.applied_update = updates[idx];
      out.noise_magnitude = std::sqrt(vec::SquaredDistance(out.applied_update, fedavg));
      break;
    }
    case AggregationRule::Kind::kTrimmedMean:
      out.applied_update = TrimmedMean(updates, rule.trim_fraction);
      out.noise_magnitude = std::sqrt(vec::SquaredDistance(out.applied_update, fedavg));
      break;
    case AggregationRule::Kind::kDp: {
      const double n = static_cast<double>(updates.size());
      out.applied_update.assign(global.size(), 0.0);
      for (const auto& u : updates) {
        const double norm = vec::Norm(u);
        const double scale = norm > rule.clip_norm ? rule.clip_norm / norm : 1.0;
        vec::Axpy(scale / n, u, out.applied_update);
      }
      const double stddev = rule.noise_sigma * rule.clip_norm / n;
      if (stddev > 0.0) {
        std::normal_distribution<double> normal(0.0, stddev);
        double sq = 0.0;
        for (double& v : out.applied_update) {
          const double z = normal(noise_rng);
          v += z;
          sq += z * z;
        }
        out.noise_magnitude = std::sqrt(sq);
      }
      break;
    }
  }
  out.params.assign(global.begin(), global.end());
  vec::Axpy(1.0, out.applied_update, out.params);
  return out;
}

}  // namespace tfi

#endif  // TFI_FEDERATION_HPP_

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

#ifndef TFI_EXPERIMENT_HPP_
#define TFI_EXPERIMENT_HPP_

// Seeded end-to-end runs: structural probing of every client, valuation,
// attacker selection, federated rounds with scheduled poisoning, metrics
// and ledger persistence. Also the sweep driver and trigger export.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tfi/architectures.hpp"
#include "tfi/attacks.hpp"
#include "tfi/config.hpp"
#include "tfi/data.hpp"
#include "tfi/defense_eval.hpp"
#include "tfi/federation.hpp"
#include "tfi/fractal.hpp"
#include "tfi/io.hpp"
#include "tfi/parallel.hpp"
#include "tfi/structmetrics.hpp"

namespace tfi {

inline constexpr const char* kCodeVersion = "tfisim 0.1.0";
inline constexpr const char* kMetricsHeader = "round,mta,asr,mean_cosine,detection_rate,margin";
inline constexpr const char* kProbeHeader = "round,client_id,srs_hat,scc_hat,value";

struct ClientProbe {
  int client_id = 0;
  double aggregation_weight = 0.0;
  double srs_hat = 0.0;
  double srs_static_hat = 0.0;
  std::optional<double> scc_hat;
  std::optional<double> value;
};

struct RoundMetrics {
  int round = 0;
  std::optional<double> mta;
  std::optional<double> asr;
  std::optional<double> mean_cosine;
  std::optional<double> detection_rate;
  double margin = 0.0;
};

struct RunResult {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::vector<ClientProbe> probes;
  std::vector<int> attackers;
  std::vector<RoundMetrics> metrics;
  double final_mta = 0.0;
  double final_asr = 0.0;
  std::optional<StructureScore> final_scc;
  double margin = 0.0;
  std::vector<std::string> errors;
};

inline std::string OptionalField(const std::optional<double>& v) {
  return v ? FormatNumber(*v) : std::string();
}

inline std::string MetricsCsv(const std::vector<RoundMetrics>& rows) {
  std::ostringstream out;
  out << kMetricsHeader << "\n";
  for (const RoundMetrics& m : rows) {
    out << m.round << "," << OptionalField(m.mta) << "," << OptionalField(m.asr) << ","
        << OptionalField(m.mean_cosine) << "," << OptionalField(m.detection_rate) << ","
        << FormatNumber(m.margin) << "\n";
  }
  return out.str();
}

inline std::string ProbeCsv(const std::vector<ClientProbe>& probes, int round = 0) {
  std::ostringstream out;
  out << kProbeHeader << "\n";
  for (const ClientProbe& p : probes) {
    out << round << "," << p.client_id << "," << FormatNumber(p.srs_hat) << ","
        << OptionalField(p.scc_hat) << "," << OptionalField(p.value) << "\n";
  }
  return out.str();
}

inline DatasetSplits LoadData(const ExperimentConfig& cfg, std::uint64_t seed) {
  const DatasetConfig& d = cfg.dataset;
  if (d.kind == "procedural") {
    ProceduralSpec spec;
    spec.train_size = d.train_size;
    spec.test_size = d.test_size;
    spec.probe_size = d.probe_size;
    spec.image_size = d.image_size;
    spec.classes = d.classes;
    spec.noise = d.noise;
    spec.seed = DeriveSeed(seed, "dataset");
    return MakeProcedural(spec);
  }
  DatasetSplits s;
  s.train = ReadIdx(d.train_images, d.train_labels);
  Dataset test = ReadIdx(d.test_images, d.test_labels);
  if (test.sample_shape != s.train.sample_shape) throw ConfigError("IDX train/test shapes differ");
  if (test.size() <= d.probe_size) throw ConfigError("IDX test split too small for the probe set");
  const std::size_t classes = std::max({s.train.classes, test.classes, d.classes});
  s.train.classes = classes;
  // The probe set is carved from the end of the test split.
  s.probe.sample_shape = s.test.sample_shape = test.sample_shape;
  s.probe.classes = s.test.classes = classes;
  const std::size_t keep = test.size() - d.probe_size;
  for (std::size_t i = 0; i < test.size(); ++i) {
    Dataset& dst = i < keep ? s.test : s.probe;
    dst.images.push_back(std::move(test.images[i]));
    dst.labels.push_back(test.labels[i]);
  }
  return s;
}

inline Dataset Subset(const Dataset& d, std::size_t limit) {
  if (limit == 0 || limit >= d.size()) return d;
  Dataset out;
  out.sample_shape = d.sample_shape;
  out.classes = d.classes;
  out.images.assign(d.images.begin(), d.images.begin() + static_cast<std::ptrdiff_t>(limit));
  out.labels.assign(d.labels.begin(), d.labels.begin() + static_cast<std::ptrdiff_t>(limit));
  return out;
}

struct Evaluation {
  double mta = 0.0;
  double asr = 0.0;
};

// Clean accuracy and attack success in one parallel pass over `test`.
inline Evaluation Evaluate(const Network& net, const Dataset& test, const Tensor& perturbation,
                           int target_class, std::size_t threads) {
  const std::size_t n = test.size();
  if (n == 0) throw ConfigError("evaluation needs a non-empty test set");
  std::vector<char> correct(n, 0), hit(n, 0);
  ParallelFor(n, threads, [&](std::size_t i) {
    correct[i] = static_cast<int>(Predict(net, test.images[i])) == test.labels[i];
    if (test.labels[i] != target_class) {
      hit[i] = static_cast<int>(Predict(net, ApplyPerturbation(test.images[i], perturbation))) ==
               target_class;
    }
  });
  std::size_t c = 0, h = 0, eligible = 0;
  for (std::size_t i = 0; i < n; ++i) {
    c += correct[i];
    h += hit[i];
    eligible += test.labels[i] != target_class;
  }
  if (eligible == 0) throw ConfigError("asr needs test samples outside the target class");
  return {static_cast<double>(c) / static_cast<double>(n),
          static_cast<double>(h) / static_cast<double>(eligible)};
}

// Everything a run derives from (config, seed) before the first round.
struct RunSetup {
  DatasetSplits data;
  std::shared_ptr<const ArchitectureGraph> arch;
  Network initial;
  std::vector<ClientProfile> clients{};
  TriggerSpec trigger_spec{};
  Tensor fractal{};
  Tensor static_patch{};
  // Perturbations used for probing and SCC: both sources through the
  // embedding at strength eps0 (SCC factor one).
  Tensor probe_fractal{};
  Tensor probe_static{};
  ProbeSet probe{};
};

inline RunSetup PrepareRun(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  DatasetSplits data = LoadData(cfg, seed);
  const Shape input = data.train.sample_shape;
  const std::size_t classes = std::max(cfg.dataset.classes, data.train.classes);
  auto arch = BuildArchitecture(cfg.architecture, input, classes, cfg.width);
  Network initial = Network::Initialize(arch, DeriveSeed(seed, "init"));
  RunSetup s{std::move(data), arch, std::move(initial)};
  s.clients = Partition(s.data.train.labels, classes,
                        PartitionSpec{cfg.n_clients, cfg.dirichlet_alpha, DeriveSeed(seed, "partition")});
  s.trigger_spec = cfg.trigger_spec(input);
  const Trigger trigger(s.trigger_spec);
  s.fractal = trigger.fractal();
  s.static_patch = trigger.static_patch();
  EmbeddingSpec emb = s.trigger_spec.embedding;
  emb.scc = 1.0;
  s.probe_fractal = EffectivePerturbation(s.fractal, emb);
  s.probe_static = EffectivePerturbation(s.static_patch, emb);
  const std::size_t m = std::min(cfg.attack.probe_count, s.data.probe.size());
  for (std::size_t j = 0; j < m; ++j) {
    s.probe.inputs.push_back(s.data.probe.images[j]);
    s.probe.labels.push_back(s.data.probe.labels[j]);
  }
  return s;
}

// Structural probing: each client trains one benign epoch from the initial
// model and is scored with the gradient-norm estimates.
inline std::vector<ClientProbe> ProbeClients(const ExperimentConfig& cfg, const RunSetup& s,
                                             std::uint64_t seed) {
  std::vector<ClientProbe> out(s.clients.size());
  TrainingConfig probe_train = cfg.training;
  probe_train.local_epochs = 1;
  ParallelFor(s.clients.size(), static_cast<std::size_t>(cfg.threads), [&](std::size_t k) {
    const ClientProfile& c = s.clients[k];
    const std::vector<Example> examples = ShardExamples(s.data.train, c.shard);
    Network local = s.initial;
    try {
      const ClientUpdate u = LocalTrain(s.initial, examples, probe_train, cfg.training.lr,
                                        DeriveSeed(seed, "probe-train", {k}));
      std::vector<double> w = s.initial.params().values;
      vec::Axpy(1.0, u.delta, w);
      local.set_values(std::move(w));
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("probe training: ") + e.what(), 0, c.id);
    }
    const SccEstimate e = EstimateScc(local, s.probe, s.probe_fractal, s.probe_static);
    ClientProbe& p = out[k];
    p.client_id = c.id;
    p.aggregation_weight = c.aggregation_weight;
    p.srs_hat = e.srs_fractal;
    p.srs_static_hat = e.srs_static;
    p.scc_hat = e.scc;
    if (e.scc && e.srs_fractal > 0.0) p.value = ClientValue(c.aggregation_weight, e.scc);
  });
  return out;
}

// Per-attacker quantities fixed before the first round.
struct AttackerState {
  double base_strength = 0.0;
  double value = 1.0;
  double scc = 1.0;
  double srs = 0.0;
  int rank = 0;
};

inline std::vector<int> RandomAttackers(const std::vector<ClientProfile>& clients,
                                        const AttackBudget& budget, std::uint64_t seed) {
  std::vector<int> ids(clients.size());
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = MakeRng(seed, "random-attackers");
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<int> out;
  double weight = 0.0;
  for (int id : ids) {
    if (budget.max_malicious && out.size() >= *budget.max_malicious) break;
    const double w = clients[static_cast<std::size_t>(id)].aggregation_weight;
    if (budget.max_total_weight && weight + w > *budget.max_total_weight * (1.0 + 1e-12)) continue;
    out.push_back(id);
    weight += w;
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::map<int, AttackerState> PlanAttack(const ExperimentConfig& cfg, const RunSetup& s,
                                               const std::vector<ClientProbe>& probes,
                                               std::uint64_t seed) {
  const AttackMethod method = ParseAttackMethod(cfg.attack.method);
  std::map<int, AttackerState> plan;
  if (method == AttackMethod::kNone) return plan;
  AttackBudget budget;
  const auto count = static_cast<std::size_t>(
      std::llround(cfg.attack.malicious_fraction * static_cast<double>(s.clients.size())));
  if (count > 0 || !cfg.attack.max_total_weight) budget.max_malicious = count;
  budget.max_total_weight = cfg.attack.max_total_weight;
  if (count == 0 && !cfg.attack.max_total_weight) return plan;
  std::vector<int> selected;
  if (method == AttackMethod::kTfi && !cfg.attack.ablations.no_scc_selection) {
    std::vector<Candidate> candidates;
    for (const ClientProbe& p : probes) {
      if (p.value) candidates.push_back({p.client_id, p.aggregation_weight, *p.value});
    }
    if (!candidates.empty()) selected = SelectClients(std::move(candidates), budget);
  } else {
    selected = RandomAttackers(s.clients, budget, seed);
  }
  int rank = 0;
  for (int id : selected) plan[id].rank = rank++;
  if (method != AttackMethod::kTfi || probes.empty()) return plan;

  double srs_sum = 0.0, value_sum = 0.0;
  std::size_t srs_n = 0, value_n = 0;
  for (int id : selected) {
    const ClientProbe& p = probes[static_cast<std::size_t>(id)];
    if (p.srs_hat > 0.0) srs_sum += p.srs_hat, ++srs_n;
    if (p.value) value_sum += *p.value, ++value_n;
  }
  const double srs_ref = srs_n ? srs_sum / static_cast<double>(srs_n) : 0.0;
  const double v_bar = value_n ? value_sum / static_cast<double>(value_n) : 1.0;
  for (auto& [id, st] : plan) {
    const ClientProbe& p = probes[static_cast<std::size_t>(id)];
    st.srs = p.srs_hat;
    st.base_strength = p.srs_hat > 0.0 && srs_ref > 0.0
                           ? BaseStrength(p.srs_hat, cfg.attack.eps0, srs_ref)
                           : cfg.attack.eps0;
    st.value = p.value ? *p.value / v_bar : 1.0;
    st.scc = p.scc_hat && *p.scc_hat > 0.0 ? *p.scc_hat : 1.0;
  }
  return plan;
}

inline Json ProbesJson(const std::vector<ClientProbe>& probes) {
  Json arr = Json::array();
  for (const ClientProbe& p : probes) {
    arr.push_back({{"client_id", p.client_id},
                   {"srs_hat", p.srs_hat},
                   {"srs_static_hat", p.srs_static_hat},
                   {"scc_hat", p.scc_hat ? Json(*p.scc_hat) : Json(nullptr)},
                   {"value", p.value ? Json(*p.value) : Json(nullptr)}});
  }
  return arr;
}

inline Json OptionalJson(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

// One seeded run; artifacts are written to `dir`.
inline RunResult RunSingle(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::filesystem::path& dir) {
  const AttackMethod method = ParseAttackMethod(cfg.attack.method);
  const RunSetup s = PrepareRun(cfg, seed);
  const std::size_t threads = static_cast<std::size_t>(cfg.threads);
  const int target = cfg.attack.target_class;
  RunResult result;
  result.seed = seed;
  result.dir = dir;
  std::filesystem::create_directories(dir);

  // Algorithm order: probe, value, select, then the scheduled rounds.
  if (method == AttackMethod::kTfi) result.probes = ProbeClients(cfg, s, seed);
  const std::map<int, AttackerState> plan = PlanAttack(cfg, s, result.probes, seed);
  for (const auto& [id, st] : plan) result.attackers.push_back(id);
  if (method == AttackMethod::kTfi) WriteTextFile(dir / "probe.csv", ProbeCsv(result.probes));

  const Ablations& abl = cfg.attack.ablations;
  const Tensor& tfi_source = abl.no_fractal ? s.static_patch : s.fractal;
  const Tensor patch = s.static_patch * cfg.attack.eps0;
  Tensor test_perturbation;
  {
    EmbeddingSpec emb = s.trigger_spec.embedding;
    emb.scc = cfg.attack.test_scc;
    test_perturbation = method == AttackMethod::kTfi || method == AttackMethod::kNone
                            ? EffectivePerturbation(tfi_source, emb)
                            : patch;
  }
  const TemporalSchedule schedule{cfg.attack.i_max, cfg.attack.lambda};
  const Dataset test = Subset(s.data.test, cfg.evaluation.test_limit);

  Network global = s.initial;
  FeasibilityLedger ledger;
  std::ostringstream rounds_jsonl;
  auto evaluate = [&](int round, RoundMetrics& m) {
    if (round != cfg.training.rounds && round % cfg.evaluation.eval_every != 0) return;
    const Evaluation e = Evaluate(global, test, test_perturbation, target, threads);
    m.mta = e.mta;
    m.asr = e.asr;
  };
  {
    RoundMetrics m;
    evaluate(0, m);
    result.metrics.push_back(m);
  }

  for (int t = 1; t <= cfg.training.rounds; ++t) {
    const std::vector<int> selected =
        SampleParticipants(s.clients.size(), cfg.training.participation_fraction, seed, t);
    const double lr = cfg.training.LearningRate(t);
    std::size_t n_att = 0;
    for (int id : selected) n_att += plan.count(id);
    const double intensity = abl.no_temporal ? schedule.i_max : schedule.Intensity(t);

    struct Slot {
      std::vector<double> delta;
      double eps = 0.0;
      bool poisoning = false;
      std::string error;
    };
    std::vector<Slot> slots(selected.size());
    double weight_total = 0.0;
    for (int id : selected) weight_total += s.clients[static_cast<std::size_t>(id)].aggregation_weight;

    for (std::size_t k = 0; k < selected.size(); ++k) {
      auto it = plan.find(selected[k]);
      if (it == plan.end() || cfg.attack.poison_fraction == 0.0) continue;
      Slot& slot = slots[k];
      if (method == AttackMethod::kTfi) {
        slot.eps = abl.no_dynamic_strength
                       ? cfg.attack.eps0
                       : RoundStrength(it->second.base_strength, it->second.value, 1.0, intensity, n_att);
        slot.poisoning = slot.eps > 0.0;
      } else {
        slot.eps = cfg.attack.eps0;
        slot.poisoning = method == AttackMethod::kLp || cfg.attack.eps0 > 0.0;
      }
    }

    ParallelFor(selected.size(), threads, [&](std::size_t k) {
      const int id = selected[k];
      const ClientProfile& c = s.clients[static_cast<std::size_t>(id)];
      Slot& slot = slots[k];
      const std::vector<Example> examples = ShardExamples(s.data.train, c.shard);
      Poisoner poisoner;
      if (slot.poisoning) {
        const AttackerState& st = plan.at(id);
        const double pf = cfg.attack.poison_fraction;
        switch (method) {
          case AttackMethod::kTfi: {
            EmbeddingSpec emb = s.trigger_spec.embedding;
            emb.scc = st.scc;
            emb.eps_base = slot.eps;
            const Tensor p = EffectivePerturbation(tfi_source, emb);
            poisoner = [p, pf, target](std::vector<Example>& batch) {
              const std::size_t n = PoisonCount(pf, batch.size());
              for (std::size_t j = 0; j < n; ++j) {
                batch[j].input = ApplyPerturbation(batch[j].input, p);
                batch[j].target = target;
              }
            };
            break;
          }
          case AttackMethod::kMr:
            poisoner = [&patch, pf, target](std::vector<Example>& batch) {
              const std::size_t n = PoisonCount(pf, batch.size());
              for (std::size_t j = 0; j < n; ++j) {
                batch[j].input = ApplyPerturbation(batch[j].input, patch);
                batch[j].target = target;
              }
            };
            break;
          case AttackMethod::kDba:
            poisoner = [&patch, q = st.rank % 4, pf, target](std::vector<Example>& batch) {
              PoisonBatchDba(batch, patch, q, target, pf);
            };
            break;
          case AttackMethod::kLp:
            poisoner = [pf, target](std::vector<Example>& batch) {
              PoisonBatchLabels(batch, pf, target);
            };
            break;
          case AttackMethod::kNone:
            break;
        }
      }
      try {
        ClientUpdate u = LocalTrain(global, examples, cfg.training, lr,
                                    DeriveSeed(seed, "local", {static_cast<std::uint64_t>(id),
                                                               static_cast<std::uint64_t>(t)}),
                                    poisoner ? &poisoner : nullptr);
        if (slot.poisoning && method == AttackMethod::kMr) {
          std::vector<double> target_w = global.params().values;
          vec::Axpy(1.0, u.delta, target_w);
          u.delta = ModelReplacementUpdate(target_w, global.params().values,
                                           c.aggregation_weight / weight_total);
        }
        slot.delta = std::move(u.delta);
      } catch (const NumericalError& e) {
        slot.error = NumericalError(e.what(), t, id).what();
      }
    });

    std::vector<std::vector<double>> updates;
    std::vector<double> weights;
    std::vector<bool> truth;
    std::vector<int> included;
    Json errors = Json::array();
    for (std::size_t k = 0; k < selected.size(); ++k) {
      if (!slots[k].error.empty()) {
        errors.push_back(slots[k].error);
        result.errors.push_back(slots[k].error);
        continue;
      }
      updates.push_back(slots[k].delta);
      weights.push_back(s.clients[static_cast<std::size_t>(selected[k])].aggregation_weight);
      truth.push_back(slots[k].poisoning);
      included.push_back(selected[k]);
    }

    RoundMetrics m;
    m.round = t;
    Json record;
    record["round"] = t;
    record["lr"] = lr;
    record["selected"] = selected;
    Json eps = Json::object(), norms = Json::object();
    for (std::size_t k = 0; k < selected.size(); ++k) {
      if (plan.count(selected[k])) eps[std::to_string(selected[k])] = slots[k].eps;
      if (slots[k].error.empty()) norms[std::to_string(selected[k])] = vec::Norm(slots[k].delta);
    }
    record["attackers"] = Json::array();
    for (std::size_t k = 0; k < included.size(); ++k) {
      if (truth[k]) record["attackers"].push_back(included[k]);
    }
    record["eps"] = eps;
    record["update_norms"] = norms;

    FeasibilityRound fr;
    if (!updates.empty()) {
      const std::size_t poisoners = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), true));
      int f = cfg.aggregation.byzantine.value_or(static_cast<int>(poisoners));
      if (cfg.aggregation.kind == "krum" && !cfg.aggregation.byzantine) {
        f = std::min(f, std::max(0, static_cast<int>(updates.size()) - 3));
      }
      const AggregationRule rule = cfg.aggregation_rule(f);
      Rng noise_rng = MakeRng(seed, "aggregation-noise", {static_cast<std::uint64_t>(t)});
      const AggregateResult agg =
          Aggregate(global.params().values, updates, weights, rule, noise_rng);
      global.set_values(agg.params);

      const std::vector<double> gamma = NormalizeWeights(weights);
      std::vector<double> adv(updates[0].size(), 0.0), benign(updates[0].size(), 0.0);
      double structural = 0.0;
      std::vector<std::vector<double>> mal_updates, benign_updates;
      for (std::size_t k = 0; k < updates.size(); ++k) {
        vec::Axpy(gamma[k], updates[k], truth[k] ? adv : benign);
        (truth[k] ? mal_updates : benign_updates).push_back(updates[k]);
        if (truth[k] && plan.count(included[k])) {
          const AttackerState& st = plan.at(included[k]);
          structural += gamma[k] * st.srs * st.scc;
        }
      }
      fr = {vec::Norm(adv), vec::Norm(benign), agg.noise_magnitude};
      record["adv_contribution"] = fr.adversarial;
      record["benign_contribution"] = fr.benign;
      record["noise_magnitude"] = fr.noise;
      record["structural_term"] = structural;
      record["krum_index"] = agg.krum_index ? Json(included[*agg.krum_index]) : Json(nullptr);
      if (!mal_updates.empty() && !benign_updates.empty()) {
        try {
          m.mean_cosine = UpdateSimilarity(mal_updates, benign_updates);
        } catch (const DegenerateError&) {
        }
      }
      if (!mal_updates.empty() && updates.size() >= 3) {
        const std::unique_ptr<bool[]> flags(new bool[truth.size()]);
        std::copy(truth.begin(), truth.end(), flags.get());
        try {
          m.detection_rate = CosineAnomalyDetector(updates, cfg.evaluation.detection_tau,
                                                   std::span<const bool>(flags.get(), truth.size()))
                                 .detection_rate;
        } catch (const DegenerateError&) {
        }
      }
    }
    ledger.Add(fr);
    m.margin = ledger.margin();
    evaluate(t, m);
    record["mta"] = OptionalJson(m.mta);
    record["asr"] = OptionalJson(m.asr);
    record["margin"] = m.margin;
    record["errors"] = errors;
    rounds_jsonl << record.dump() << "\n";
    result.metrics.push_back(m);
  }

  const RoundMetrics& last = result.metrics.back();
  if (!last.mta) {
    const Evaluation e = Evaluate(global, test, test_perturbation, target, threads);
    result.final_mta = e.mta, result.final_asr = e.asr;
  } else {
    result.final_mta = *last.mta, result.final_asr = *last.asr;
  }
  result.margin = ledger.margin();
  if (cfg.evaluation.scc_samples > 0) {
    const std::size_t n = std::min(cfg.evaluation.scc_samples, s.data.probe.size());
    std::vector<Tensor> xs(s.data.probe.images.begin(),
                           s.data.probe.images.begin() + static_cast<std::ptrdiff_t>(n));
    const SrsConfig srs_cfg = LayerWeights(*s.arch, cfg.attack.connectivity_bonus);
    try {
      result.final_scc = ComputeScc(global, xs, s.probe_fractal, s.probe_static, srs_cfg);
    } catch (const DegenerateError&) {
    }
  }

  WriteTextFile(dir / "metrics.csv", MetricsCsv(result.metrics));
  WriteTextFile(dir / "rounds.jsonl", rounds_jsonl.str());
  SaveParams(dir / "final_params", global);
  Json summary = {{"seed", seed},
                  {"architecture", cfg.architecture},
                  {"attack", cfg.attack.method},
                  {"attackers", result.attackers},
                  {"final_mta", result.final_mta},
                  {"final_asr", result.final_asr},
                  {"margin", result.margin},
                  {"errors", result.errors}};
  summary["final_scc"] = result.final_scc ? Json(result.final_scc->scc) : Json(nullptr);
  summary["final_srs_fractal"] = result.final_scc ? Json(result.final_scc->srs_fractal) : Json(nullptr);
  summary["final_srs_static"] = result.final_scc ? Json(result.final_scc->srs_static) : Json(nullptr);
  summary["probes"] = ProbesJson(result.probes);
  WriteJsonFile(dir / "summary.json", summary);
  return result;
}

inline std::string ConfigHash(const ExperimentConfig& cfg) { return HashHex(ToJson(cfg).dump()); }

inline std::uint64_t RepeatSeed(const ExperimentConfig& cfg, int repeat) {
  return cfg.master_seed + static_cast<std::uint64_t>(repeat);
}

struct ExperimentOutcome {
  Json manifest;
  std::vector<RunResult> runs;
};

// Runs every repeat and writes manifest.json under the resolved output dir.
inline ExperimentOutcome RunExperiment(const ExperimentConfig& cfg) {
  cfg.Validate();
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path root = ResolveOutputDir(cfg.output_dir);
  std::filesystem::create_directories(root);
  WriteJsonFile(root / "config.json", ToJson(cfg));
  ExperimentOutcome out;
  Json runs = Json::array();
  for (int r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = RepeatSeed(cfg, r);
    const std::string sub = "seed-" + std::to_string(seed);
    out.runs.push_back(RunSingle(cfg, seed, root / sub));
    runs.push_back({{"seed", seed},
                    {"dir", sub},
                    {"metrics", sub + "/metrics.csv"},
                    {"rounds", sub + "/rounds.jsonl"},
                    {"summary", sub + "/summary.json"},
                    {"checkpoint", sub + "/final_params.json"}});
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.manifest = {{"format", "tfi-manifest"},
                  {"kind", "run"},
                  {"name", cfg.name},
                  {"config_hash", ConfigHash(cfg)},
                  {"code_version", kCodeVersion},
                  {"config", ToJson(cfg)},
                  {"seeds", Json::array()},
                  {"runs", runs},
                  {"wall_clock_seconds", wall}};
  for (int r = 0; r < cfg.repeats; ++r) out.manifest["seeds"].push_back(RepeatSeed(cfg, r));
  WriteJsonFile(root / "manifest.json", out.manifest);
  return out;
}

// Structural probing only; writes probe.csv per repeat seed.
inline std::vector<ClientProbe> ProbeExperiment(const ExperimentConfig& cfg) {
  cfg.Validate();
  const std::filesystem::path root = ResolveOutputDir(cfg.output_dir);
  std::vector<ClientProbe> all;
  std::string csv = std::string(kProbeHeader) + "\n";
  for (int r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = RepeatSeed(cfg, r);
    const RunSetup s = PrepareRun(cfg, seed);
    std::vector<ClientProbe> probes = ProbeClients(cfg, s, seed);
    WriteTextFile(root / ("seed-" + std::to_string(seed)) / "probe.csv", ProbeCsv(probes));
    all.insert(all.end(), probes.begin(), probes.end());
  }
  return all;
}

// Writes the trigger components as images, tensors and a spectral report.
inline Json ExportTrigger(const ExperimentConfig& cfg) {
  cfg.Validate();
  const std::filesystem::path root = ResolveOutputDir(cfg.output_dir) / "trigger";
  const RunSetup s = PrepareRun(cfg, cfg.master_seed);
  const Trigger trigger(s.trigger_spec);
  auto signed_image = [&](const std::string& name, const Tensor& t) {
    double a = 0.0;
    for (double v : t.values()) a = std::max(a, std::abs(v));
    WritePnm(root / (name + (t.shape()[0] == 1 ? ".pgm" : ".ppm")), t, -std::max(a, 1e-12),
             std::max(a, 1e-12));
    SaveTensor(root / name, t);
  };
  signed_image("base", trigger.base());
  signed_image("fractal", trigger.fractal());
  signed_image("static", trigger.static_patch());
  signed_image("fractal_effective", s.probe_fractal);
  signed_image("static_effective", s.probe_static);
  const Tensor& x = s.data.test.images.front();
  EmbeddingSpec emb = s.trigger_spec.embedding;
  emb.scc = cfg.attack.test_scc;
  const Tensor poisoned = Embed(x, trigger.fractal(), emb);
  const std::string ext = x.shape()[0] == 1 ? ".pgm" : ".ppm";
  WritePnm(root / ("clean" + ext), x, 0.0, 1.0);
  WritePnm(root / ("poisoned" + ext), poisoned, 0.0, 1.0);
  Json report = Json::object();
  for (auto [name, delta] : {std::pair<const char*, const Tensor*>{"fractal", &trigger.fractal()},
                             {"static", &trigger.static_patch()}}) {
    const SpectralReport r = AnalyzeSpectrum(*delta, x);
    report[name] = {{"band_energy", r.band_energy},
                    {"dominant_band_count", r.dominant_band_count},
                    {"psnr_unit", r.psnr},
                    {"psnr_embedded", Psnr(x, Embed(x, *delta, emb))}};
  }
  WriteJsonFile(root / "spectrum.json", report);
  return report;
}

}  // namespace tfi

#endif  // TFI_EXPERIMENT_HPP_

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

#ifndef TFI_CONFIG_HPP_
#define TFI_CONFIG_HPP_

// Experiment configuration: a single versioned JSON document. Parsing is
// strict; unknown keys and out-of-range values raise ConfigError.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tfi/architectures.hpp"
#include "tfi/attacks.hpp"
#include "tfi/errors.hpp"
#include "tfi/federation.hpp"
#include "tfi/fractal.hpp"
#include "tfi/io.hpp"

namespace tfi {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutputRootEnv = "TFISIM_OUTPUT_ROOT";

struct DatasetConfig {
  std::string kind = "procedural";  // procedural | idx
  std::size_t train_size = 1600;
  std::size_t test_size = 800;
  std::size_t probe_size = 64;
  std::size_t image_size = 16;
  std::size_t classes = 8;
  double noise = 0.05;
  std::string train_images, train_labels, test_images, test_labels;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct AggregationConfig {
  std::string kind = "fedavg";  // fedavg | krum | trimmed_mean | dp
  // Krum f; when unset, the number of poisoning participants in the round.
  std::optional<int> byzantine;
  double trim_fraction = 0.1;
  double clip_norm = 1.0;
  double noise_sigma = 0.0;

  friend bool operator==(const AggregationConfig&, const AggregationConfig&) = default;
};

struct Ablations {
  bool no_scc_selection = false;
  bool no_fractal = false;
  bool no_temporal = false;
  bool no_dynamic_strength = false;

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct AttackConfig {
  std::string method = "none";  // none | tfi | mr | dba | lp
  // Fraction of clients that are malicious: max_malicious = round(f * n).
  double malicious_fraction = 0.1;
  std::optional<double> max_total_weight;
  int target_class = 0;
  double eps0 = 1.0;
  double i_max = 1.0;
  double lambda = 0.1;
  // Fraction of each malicious batch that is poisoned.
  double poison_fraction = 0.5;
  std::size_t probe_count = 32;
  double connectivity_bonus = 1.5;
  // SCC used when sizing the test-time trigger.
  double test_scc = 1.0;
  Ablations ablations;

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct TriggerConfig {
  std::uint64_t seed = 1;
  double spectral_exponent = 2.0;
  std::vector<double> sigmas{0.0, 1.0, 2.0};
  std::vector<double> alphas{0.5, 0.3, 0.2};
  double compat_exponent = 0.5;
  double window_cutoff = 0.6;
  double window_rolloff = 0.2;
  bool all_pass = false;
  std::size_t static_patch = 3;

  friend bool operator==(const TriggerConfig&, const TriggerConfig&) = default;
};

struct EvaluationConfig {
  int eval_every = 1;
  // Test samples used per evaluation; 0 uses the whole test split.
  std::size_t test_limit = 0;
  // Probe samples for the exact SCC of the final model; 0 disables it.
  std::size_t scc_samples = 4;
  double detection_tau = 0.5;

  friend bool operator==(const EvaluationConfig&, const EvaluationConfig&) = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name = "experiment";
  DatasetConfig dataset;
  std::string architecture = "residual_cnn";
  std::size_t width = 6;
  std::size_t n_clients = 100;
  double dirichlet_alpha = 0.5;
  TrainingConfig training;
  AggregationConfig aggregation;
  AttackConfig attack;
  TriggerConfig trigger;
  EvaluationConfig evaluation;
  std::uint64_t master_seed = 1;
  int repeats = 1;
  int threads = 1;
  std::string output_dir = "runs/experiment";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  void Validate() const;
  TriggerSpec trigger_spec(const Shape& input) const;
  AggregationRule aggregation_rule(int byzantine) const;
};

namespace detail {

// Reads keys from one JSON object and rejects any it did not consume.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void Get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(Where(key) + ": expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError(Where(key) + ": expected an integer");
        if (std::is_unsigned_v<T> && it->template get<std::int64_t>() < 0) {
          throw ConfigError(Where(key) + ": expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError(Where(key) + ": expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(Where(key) + ": expected a string");
      }
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(Where(key) + ": " + e.what());
    }
  }

  template <typename T>
  void GetOptional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    seen_.erase(key);
    Get(key, v);
    out = v;
  }

  std::optional<ObjectReader> Sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return ObjectReader(*it, Where(key));
  }

  void Finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(Where(it.key().c_str()) + ": unknown key");
    }
  }

 private:
  std::string Where(const std::string& key) const { return path_ + "." + key; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void Require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace detail

inline Json ToJson(const ExperimentConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  const DatasetConfig& d = c.dataset;
  j["dataset"] = {{"kind", d.kind},         {"train_size", d.train_size},
                  {"test_size", d.test_size}, {"probe_size", d.probe_size},
                  {"image_size", d.image_size}, {"classes", d.classes},
                  {"noise", d.noise}};
  if (d.kind == "idx") {
    j["dataset"]["train_images"] = d.train_images;
    j["dataset"]["train_labels"] = d.train_labels;
    j["dataset"]["test_images"] = d.test_images;
    j["dataset"]["test_labels"] = d.test_labels;
  }
  j["architecture"] = c.architecture;
  j["width"] = c.width;
  j["partition"] = {{"n_clients", c.n_clients}, {"dirichlet_alpha", c.dirichlet_alpha}};
  const TrainingConfig& t = c.training;
  j["training"] = {{"local_epochs", t.local_epochs},
                   {"batch_size", t.batch_size},
                   {"lr", t.lr},
                   {"momentum", t.momentum},
                   {"weight_decay", t.weight_decay},
                   {"participation_fraction", t.participation_fraction},
                   {"rounds", t.rounds}};
  const AggregationConfig& g = c.aggregation;
  j["aggregation"] = {{"kind", g.kind},
                      {"byzantine", g.byzantine ? Json(*g.byzantine) : Json(nullptr)},
                      {"trim_fraction", g.trim_fraction},
                      {"clip_norm", g.clip_norm},
                      {"noise_sigma", g.noise_sigma}};
  const AttackConfig& a = c.attack;
  j["attack"] = {{"method", a.method},
                 {"malicious_fraction", a.malicious_fraction},
                 {"max_total_weight", a.max_total_weight ? Json(*a.max_total_weight) : Json(nullptr)},
                 {"target_class", a.target_class},
                 {"eps0", a.eps0},
                 {"i_max", a.i_max},
                 {"lambda", a.lambda},
                 {"poison_fraction", a.poison_fraction},
                 {"probe_count", a.probe_count},
                 {"connectivity_bonus", a.connectivity_bonus},
                 {"test_scc", a.test_scc},
                 {"ablations",
                  {{"no_scc_selection", a.ablations.no_scc_selection},
                   {"no_fractal", a.ablations.no_fractal},
                   {"no_temporal", a.ablations.no_temporal},
                   {"no_dynamic_strength", a.ablations.no_dynamic_strength}}}};
  const TriggerConfig& tr = c.trigger;
  j["trigger"] = {{"seed", tr.seed},
                  {"spectral_exponent", tr.spectral_exponent},
                  {"sigmas", tr.sigmas},
                  {"alphas", tr.alphas},
                  {"compat_exponent", tr.compat_exponent},
                  {"window_cutoff", tr.window_cutoff},
                  {"window_rolloff", tr.window_rolloff},
                  {"all_pass", tr.all_pass},
                  {"static_patch", tr.static_patch}};
  const EvaluationConfig& e = c.evaluation;
  j["evaluation"] = {{"eval_every", e.eval_every},
                     {"test_limit", e.test_limit},
                     {"scc_samples", e.scc_samples},
                     {"detection_tau", e.detection_tau}};
  j["seeds"] = {{"master", c.master_seed}, {"repeats", c.repeats}};
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  return j;
}

inline ExperimentConfig ConfigFromJson(const Json& j) {
  ExperimentConfig c;
  detail::ObjectReader r(j, "config");
  int version = -1;
  r.Get("schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("config.schema_version: expected " + std::to_string(kSchemaVersion) +
                      ", got " + std::to_string(version));
  }
  c.schema_version = version;
  r.Get("name", c.name);
  if (auto d = r.Sub("dataset")) {
    DatasetConfig& ds = c.dataset;
    d->Get("kind", ds.kind);
    d->Get("train_size", ds.train_size);
    d->Get("test_size", ds.test_size);
    d->Get("probe_size", ds.probe_size);
    d->Get("image_size", ds.image_size);
    d->Get("classes", ds.classes);
    d->Get("noise", ds.noise);
    d->Get("train_images", ds.train_images);
    d->Get("train_labels", ds.train_labels);
    d->Get("test_images", ds.test_images);
    d->Get("test_labels", ds.test_labels);
    d->Finish();
  }
  r.Get("architecture", c.architecture);
  r.Get("width", c.width);
  if (auto p = r.Sub("partition")) {
    p->Get("n_clients", c.n_clients);
    p->Get("dirichlet_alpha", c.dirichlet_alpha);
    p->Finish();
  }
  if (auto t = r.Sub("training")) {
    TrainingConfig& tc = c.training;
    t->Get("local_epochs", tc.local_epochs);
    t->Get("batch_size", tc.batch_size);
    t->Get("lr", tc.lr);
    t->Get("momentum", tc.momentum);
    t->Get("weight_decay", tc.weight_decay);
    t->Get("participation_fraction", tc.participation_fraction);
    t->Get("rounds", tc.rounds);
    t->Finish();
  }
  if (auto g = r.Sub("aggregation")) {
    AggregationConfig& ac = c.aggregation;
    g->Get("kind", ac.kind);
    g->GetOptional("byzantine", ac.byzantine);
    g->Get("trim_fraction", ac.trim_fraction);
    g->Get("clip_norm", ac.clip_norm);
    g->Get("noise_sigma", ac.noise_sigma);
    g->Finish();
  }
  if (auto a = r.Sub("attack")) {
    AttackConfig& ac = c.attack;
    a->Get("method", ac.method);
    a->Get("malicious_fraction", ac.malicious_fraction);
    a->GetOptional("max_total_weight", ac.max_total_weight);
    a->Get("target_class", ac.target_class);
    a->Get("eps0", ac.eps0);
    a->Get("i_max", ac.i_max);
    a->Get("lambda", ac.lambda);
    a->Get("poison_fraction", ac.poison_fraction);
    a->Get("probe_count", ac.probe_count);
    a->Get("connectivity_bonus", ac.connectivity_bonus);
    a->Get("test_scc", ac.test_scc);
    if (auto ab = a->Sub("ablations")) {
      ab->Get("no_scc_selection", ac.ablations.no_scc_selection);
      ab->Get("no_fractal", ac.ablations.no_fractal);
      ab->Get("no_temporal", ac.ablations.no_temporal);
      ab->Get("no_dynamic_strength", ac.ablations.no_dynamic_strength);
      ab->Finish();
    }
    a->Finish();
  }
  if (auto t = r.Sub("trigger")) {
    TriggerConfig& tc = c.trigger;
    t->Get("seed", tc.seed);
    t->Get("spectral_exponent", tc.spectral_exponent);
    t->Get("sigmas", tc.sigmas);
    t->Get("alphas", tc.alphas);
    t->Get("compat_exponent", tc.compat_exponent);
    t->Get("window_cutoff", tc.window_cutoff);
    t->Get("window_rolloff", tc.window_rolloff);
    t->Get("all_pass", tc.all_pass);
    t->Get("static_patch", tc.static_patch);
    t->Finish();
  }
  if (auto e = r.Sub("evaluation")) {
    EvaluationConfig& ec = c.evaluation;
    e->Get("eval_every", ec.eval_every);
    e->Get("test_limit", ec.test_limit);
    e->Get("scc_samples", ec.scc_samples);
    e->Get("detection_tau", ec.detection_tau);
    e->Finish();
  }
  if (auto s = r.Sub("seeds")) {
    s->Get("master", c.master_seed);
    s->Get("repeats", c.repeats);
    s->Finish();
  }
  r.Get("threads", c.threads);
  r.Get("output_dir", c.output_dir);
  r.Finish();
  c.Validate();
  return c;
}

inline ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  return ConfigFromJson(ReadJsonFile(path));
}

inline void ExperimentConfig::Validate() const {
  using detail::Require;
  Require(!name.empty(), "name must not be empty");
  Require(dataset.kind == "procedural" || dataset.kind == "idx",
          "dataset.kind must be procedural or idx");
  if (dataset.kind == "idx") {
    Require(!dataset.train_images.empty() && !dataset.train_labels.empty() &&
                !dataset.test_images.empty() && !dataset.test_labels.empty(),
            "idx dataset needs train/test image and label paths");
  } else {
    Require(dataset.train_size > 0 && dataset.test_size > 0, "dataset sizes must be positive");
    Require(dataset.image_size >= 8 && dataset.image_size % 4 == 0,
            "dataset.image_size must be a multiple of 4, at least 8");
    Require(dataset.classes <= 8, "procedural datasets support at most 8 classes");
    Require(dataset.noise >= 0.0, "dataset.noise must be non-negative");
  }
  Require(dataset.classes >= 2, "dataset.classes must be at least 2");
  Require(dataset.probe_size >= 1, "dataset.probe_size must be at least 1");
  Require(std::find(kArchitectureNames.begin(), kArchitectureNames.end(), architecture) !=
              kArchitectureNames.end(),
          "unknown architecture '" + architecture + "'");
  Require(width >= 1, "width must be positive");
  Require(n_clients >= 1, "partition.n_clients must be positive");
  Require(dirichlet_alpha > 0.0, "partition.dirichlet_alpha must be positive");
  training.Validate();
  Require(std::llround(training.participation_fraction * static_cast<double>(n_clients)) >= 1,
          "participation_fraction selects no clients");
  const std::set<std::string> kinds{"fedavg", "krum", "trimmed_mean", "dp"};
  Require(kinds.count(aggregation.kind) == 1, "unknown aggregation kind '" + aggregation.kind + "'");
  aggregation_rule(aggregation.byzantine.value_or(0)).Validate();
  if (aggregation.kind == "krum") {
    Require(std::llround(training.participation_fraction * static_cast<double>(n_clients)) >=
                3 + aggregation.byzantine.value_or(0),
            "krum needs at least f + 3 participants per round");
  }
  ParseAttackMethod(attack.method);
  Require(attack.malicious_fraction >= 0.0 && attack.malicious_fraction <= 1.0,
          "attack.malicious_fraction must lie in [0, 1]");
  Require(attack.target_class >= 0 && static_cast<std::size_t>(attack.target_class) < dataset.classes,
          "attack.target_class out of range");
  Require(attack.eps0 >= 0.0 && std::isfinite(attack.eps0), "attack.eps0 must be non-negative");
  TemporalSchedule{attack.i_max, attack.lambda}.Validate();
  Require(attack.poison_fraction >= 0.0 && attack.poison_fraction <= 1.0,
          "attack.poison_fraction must lie in [0, 1]");
  Require(attack.probe_count >= 1, "attack.probe_count must be at least 1");
  Require(attack.connectivity_bonus >= 1.0, "attack.connectivity_bonus must be >= 1");
  Require(attack.test_scc > 0.0, "attack.test_scc must be positive");
  if (attack.max_total_weight) Require(*attack.max_total_weight > 0.0, "attack.max_total_weight must be positive");
  Require(trigger.compat_exponent > 0.0 && trigger.compat_exponent < 1.0,
          "trigger.compat_exponent must lie in (0, 1)");
  ValidateScales({trigger.sigmas, trigger.alphas});
  Require(trigger.static_patch >= 1 && trigger.static_patch <= dataset.image_size,
          "trigger.static_patch out of range");
  Require(evaluation.eval_every >= 1, "evaluation.eval_every must be positive");
  Require(evaluation.detection_tau >= -1.0 && evaluation.detection_tau <= 1.0,
          "evaluation.detection_tau must lie in [-1, 1]");
  Require(repeats >= 1, "seeds.repeats must be positive");
  Require(threads >= 1, "threads must be positive");
  Require(!output_dir.empty(), "output_dir must not be empty");
}

inline TriggerSpec ExperimentConfig::trigger_spec(const Shape& input) const {
  TriggerSpec s;
  s.template_spec = {trigger.seed, input[1], input[2], input[0], trigger.spectral_exponent};
  s.scales = {trigger.sigmas, trigger.alphas};
  s.embedding.eps_base = attack.eps0;
  s.embedding.compat_exponent = trigger.compat_exponent;
  s.embedding.window = trigger.all_pass ? FrequencyWindow::AllPass()
                                        : FrequencyWindow{trigger.window_cutoff, trigger.window_rolloff};
  s.static_patch = trigger.static_patch;
  return s;
}

inline AggregationRule ExperimentConfig::aggregation_rule(int byzantine) const {
  AggregationRule r;
  if (aggregation.kind == "krum") r = AggregationRule::Krum(byzantine);
  if (aggregation.kind == "trimmed_mean") r = AggregationRule::TrimmedMean(aggregation.trim_fraction);
  if (aggregation.kind == "dp") r = AggregationRule::Dp(aggregation.clip_norm, aggregation.noise_sigma);
  return r;
}

inline constexpr std::array<std::string_view, 3> kDeskArchitectures = {"plain_cnn", "residual_cnn",
                                                                      "dense_cnn"};

// Desk-scale preset: 20 clients, 30 rounds, 8-class 16x16x3 procedural
// data, 10% malicious clients running TFI.
inline ExperimentConfig DeskPreset() {
  ExperimentConfig c;
  c.name = "desk";
  c.dataset.train_size = 1600;
  c.dataset.test_size = 400;
  c.dataset.probe_size = 64;
  c.architecture = "residual_cnn";
  c.n_clients = 20;
  c.training.rounds = 30;
  c.training.local_epochs = 2;
  c.training.batch_size = 16;
  c.training.lr = 0.05;
  c.training.participation_fraction = 0.5;
  c.attack.method = "tfi";
  c.attack.malicious_fraction = 0.1;
  c.attack.eps0 = 4.0;
  c.attack.i_max = 2.0;
  c.attack.lambda = 0.1;
  c.attack.poison_fraction = 0.25;
  c.output_dir = "runs/desk";
  return c;
}

inline ExperimentConfig Preset(std::string_view name) {
  if (name == "desk") return DeskPreset();
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

// Output directory with the override environment variable applied:
// relative paths are placed under it, absolute ones keep their last part.
inline std::filesystem::path ResolveOutputDir(const std::string& output_dir) {
  std::filesystem::path dir(output_dir);
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    return std::filesystem::path(root) / (dir.is_absolute() ? dir.filename() : dir);
  }
  return dir;
}

}  // namespace tfi

#endif  // TFI_CONFIG_HPP_

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

#ifndef TFI_SWEEP_HPP_
#define TFI_SWEEP_HPP_

// One-axis parameter sweeps over the experiment runner.

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tfi/config.hpp"
#include "tfi/defense_eval.hpp"
#include "tfi/experiment.hpp"
#include "tfi/io.hpp"

namespace tfi {

inline constexpr const char* kSweepHeader = "axis,value,seed,mta,asr,scc,margin,retention";
inline const std::vector<std::string> kSweepAxes = {"poison_client_fraction", "dp_sigma",
                                                    "architecture"};

struct SweepRow {
  std::string value;
  std::uint64_t seed = 0;
  double mta = 0.0;
  double asr = 0.0;
  std::optional<double> scc;
  double margin = 0.0;
  std::optional<double> retention;
};

struct SweepOutcome {
  Json manifest;
  std::vector<SweepRow> rows;
  // Smallest poisoning fraction whose seed-mean ASR reaches the target.
  std::optional<std::string> min_value_reaching_target;
  // Per-seed Pearson(SCC, ASR) across architectures.
  std::vector<std::optional<double>> pearson_per_seed;
};

inline double ParseAxisNumber(const std::string& axis, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("sweep axis " + axis + ": '" + value + "' is not a number");
  }
}

// Config for one sweep point. A zero DP noise level means no defense.
inline ExperimentConfig ApplyAxis(ExperimentConfig cfg, const std::string& axis, const std::string& value) {
  if (axis == "poison_client_fraction") {
    cfg.attack.malicious_fraction = ParseAxisNumber(axis, value);
  } else if (axis == "dp_sigma") {
    const double sigma = ParseAxisNumber(axis, value);
    if (!(sigma >= 0.0)) throw ConfigError("dp_sigma values must be non-negative");
    cfg.aggregation.noise_sigma = sigma;
    cfg.aggregation.kind = sigma > 0.0 ? "dp" : "fedavg";
  } else if (axis == "architecture") {
    cfg.architecture = value;
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  cfg.output_dir = (std::filesystem::path(cfg.output_dir) / (axis + "-" + value)).string();
  cfg.Validate();
  return cfg;
}

inline std::string SweepCsv(const std::string& axis, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << kSweepHeader << "\n";
  for (const SweepRow& r : rows) {
    out << axis << "," << r.value << "," << r.seed << "," << FormatNumber(r.mta) << ","
        << FormatNumber(r.asr) << "," << OptionalField(r.scc) << "," << FormatNumber(r.margin)
        << "," << OptionalField(r.retention) << "\n";
  }
  return out.str();
}

inline SweepOutcome Sweep(const ExperimentConfig& base, const std::string& axis,
                          const std::vector<std::string>& values, double target_asr = 0.85) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (std::find(kSweepAxes.begin(), kSweepAxes.end(), axis) == kSweepAxes.end()) {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  std::vector<ExperimentConfig> configs;
  for (const std::string& v : values) configs.push_back(ApplyAxis(base, axis, v));
  const std::filesystem::path root = ResolveOutputDir(base.output_dir);
  SweepOutcome out;
  Json points = Json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const ExperimentOutcome run = RunExperiment(configs[i]);
    points.push_back({{"value", values[i]}, {"manifest", axis + "-" + values[i] + "/manifest.json"}});
    for (const RunResult& r : run.runs) {
      SweepRow row{values[i], r.seed, r.final_mta, r.final_asr, std::nullopt, r.margin, std::nullopt};
      if (r.final_scc) row.scc = r.final_scc->scc;
      out.rows.push_back(row);
    }
  }
  if (axis == "dp_sigma") {
    std::map<std::uint64_t, double> reference;
    for (const SweepRow& r : out.rows) {
      if (ParseAxisNumber(axis, r.value) == 0.0) reference[r.seed] = r.asr;
    }
    for (SweepRow& r : out.rows) {
      auto it = reference.find(r.seed);
      if (it != reference.end() && it->second > 0.0) r.retention = Retention(r.asr, it->second);
    }
  }
  Json summary = Json::object();
  if (axis == "poison_client_fraction") {
    std::vector<std::pair<double, std::string>> ordered;
    for (const std::string& v : values) ordered.emplace_back(ParseAxisNumber(axis, v), v);
    std::sort(ordered.begin(), ordered.end());
    for (const auto& [num, v] : ordered) {
      double sum = 0.0;
      int n = 0;
      for (const SweepRow& r : out.rows) {
        if (r.value == v) sum += r.asr, ++n;
      }
      if (n && sum / n >= target_asr) {
        out.min_value_reaching_target = v;
        break;
      }
    }
    summary["target_asr"] = target_asr;
    summary["min_value_reaching_target"] =
        out.min_value_reaching_target ? Json(*out.min_value_reaching_target) : Json(nullptr);
  }
  if (axis == "architecture") {
    std::map<std::uint64_t, std::pair<std::vector<double>, std::vector<double>>> by_seed;
    for (const SweepRow& r : out.rows) {
      if (!r.scc) continue;
      by_seed[r.seed].first.push_back(*r.scc);
      by_seed[r.seed].second.push_back(r.asr);
    }
    Json per_seed = Json::object();
    for (const auto& [seed, xy] : by_seed) {
      std::optional<double> r;
      try {
        if (xy.first.size() >= 3) r = Pearson(xy.first, xy.second);
      } catch (const DegenerateError&) {
      }
      out.pearson_per_seed.push_back(r);
      per_seed[std::to_string(seed)] = OptionalJson(r);
    }
    summary["pearson_scc_asr"] = per_seed;
  }
  WriteTextFile(root / "sweep.csv", SweepCsv(axis, out.rows));
  out.manifest = {{"format", "tfi-manifest"},
                  {"kind", "sweep"},
                  {"name", base.name},
                  {"config_hash", ConfigHash(base)},
                  {"code_version", kCodeVersion},
                  {"axis", axis},
                  {"values", values},
                  {"points", points},
                  {"sweep_csv", "sweep.csv"},
                  {"summary", summary}};
  WriteJsonFile(root / "manifest.json", out.manifest);
  return out;
}

}  // namespace tfi

#endif  // TFI_SWEEP_HPP_

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


// tfisim: command-line front end for the federated backdoor simulator.
//
//   tfisim run <config>
//   tfisim sweep <config> --axis <axis> --values v1,v2,...
//   tfisim probe <config>
//   tfisim trigger <config>
//   tfisim plots <manifest>
//   tfisim preset <name> [--out file]
//
// Exit status: 0 on success, 2 on configuration errors, 3 on runtime
// failures. TFISIM_OUTPUT_ROOT relocates every output directory.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tfi/config.hpp"
#include "tfi/errors.hpp"
#include "tfi/experiment.hpp"
#include "tfi/plots.hpp"
#include "tfi/sweep.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

tfi::ExperimentConfig Load(const std::string& path, const std::optional<int>& threads) {
  tfi::ExperimentConfig cfg = tfi::LoadConfig(path);
  if (threads) {
    cfg.threads = *threads;
    cfg.Validate();
  }
  return cfg;
}

void PrintRun(const tfi::ExperimentOutcome& out) {
  for (const tfi::RunResult& r : out.runs) {
    std::printf("seed %llu: mta=%.4f asr=%.4f", static_cast<unsigned long long>(r.seed), r.final_mta,
                r.final_asr);
    if (r.final_scc) std::printf(" scc=%.4f", r.final_scc->scc);
    std::printf(" margin=%.4g -> %s\n", r.margin, r.dir.string().c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated backdoor simulator with structure-aware fractal triggers"};
  app.require_subcommand(1);
  std::string config_path, manifest_path, axis, values_text, out_path, preset_name = "desk";
  std::optional<int> threads;
  double target_asr = 0.85;

  auto* run = app.add_subcommand("run", "Run every repeat of an experiment config");
  run->add_option("config", config_path, "Experiment JSON")->required();
  run->add_option("--threads", threads, "Worker threads (overrides the config)");

  auto* sweep = app.add_subcommand("sweep", "Run one experiment per value along an axis");
  sweep->add_option("config", config_path, "Experiment JSON")->required();
  sweep->add_option("--axis", axis, "poison_client_fraction | dp_sigma | architecture")->required();
  sweep->add_option("--values", values_text, "Comma-separated values")->required();
  sweep->add_option("--target-asr", target_asr, "ASR threshold for the poisoning-fraction axis");
  sweep->add_option("--threads", threads, "Worker threads (overrides the config)");

  auto* probe = app.add_subcommand("probe", "Write the per-client SRS/SCC table only");
  probe->add_option("config", config_path, "Experiment JSON")->required();
  probe->add_option("--threads", threads, "Worker threads (overrides the config)");

  auto* trigger = app.add_subcommand("trigger", "Export trigger images, tensors and spectra");
  trigger->add_option("config", config_path, "Experiment JSON")->required();

  auto* plots = app.add_subcommand("plots", "Emit long-format CSV and SVG charts for a manifest");
  plots->add_option("manifest", manifest_path, "manifest.json of a run or sweep")->required();
  plots->add_option("--out", out_path, "Output directory (default: <manifest dir>/plots)");

  auto* preset = app.add_subcommand("preset", "Write a built-in experiment config");
  preset->add_option("name", preset_name, "Preset name (desk)");
  preset->add_option("--out", out_path, "Destination file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) {
      PrintRun(tfi::RunExperiment(Load(config_path, threads)));
    } else if (*sweep) {
      std::vector<std::string> values;
      std::string item;
      for (char c : values_text + ",") {
        if (c == ',') {
          if (!item.empty()) values.push_back(item);
          item.clear();
        } else if (c != ' ') {
          item += c;
        }
      }
      const tfi::SweepOutcome out = tfi::Sweep(Load(config_path, threads), axis, values, target_asr);
      for (const tfi::SweepRow& r : out.rows) {
        std::printf("%s=%s seed %llu: mta=%.4f asr=%.4f\n", axis.c_str(), r.value.c_str(),
                    static_cast<unsigned long long>(r.seed), r.mta, r.asr);
      }
      if (out.min_value_reaching_target) {
        std::printf("smallest %s reaching ASR %.2f: %s\n", axis.c_str(), target_asr,
                    out.min_value_reaching_target->c_str());
      }
    } else if (*probe) {
      const auto probes = tfi::ProbeExperiment(Load(config_path, threads));
      std::cout << tfi::ProbeCsv(probes);
    } else if (*trigger) {
      std::cout << tfi::ExportTrigger(tfi::LoadConfig(config_path)).dump(2) << "\n";
    } else if (*plots) {
      const std::filesystem::path manifest(manifest_path);
      const auto out = tfi::EmitPlots(manifest, out_path.empty() ? manifest.parent_path() / "plots"
                                                                 : std::filesystem::path(out_path));
      std::printf("%s (%zu rows), %zu charts\n", out.long_csv.string().c_str(), out.long_rows,
                  out.svgs.size());
    } else if (*preset) {
      const std::string text = tfi::ToJson(tfi::Preset(preset_name)).dump(2) + "\n";
      if (out_path.empty()) {
        std::cout << text;
      } else {
        tfi::WriteTextFile(out_path, text);
      }
    }
  } catch (const tfi::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}

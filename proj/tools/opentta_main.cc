/*
 * Copyright 2026 The OpenTTA Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// opentta: run | report | synth.
//
// Engine settings come from defaults, then --config FILE, then OPENTTA_*
// environment variables, then --kebab-case flags.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "opentta/config.h"
#include "opentta/io.h"
#include "opentta/metrics.h"
#include "opentta/pipeline.h"
#include "opentta/synth.h"

namespace {

using opentta::EngineConfig;

void AddConfigFlags(CLI::App* cmd, std::map<std::string, std::string>* values) {
  for (const opentta::ConfigKey& key : opentta::ConfigKeys()) {
    cmd->add_option("--" + opentta::KebabCase(key.name), (*values)[key.name],
                    key.help)
        ->group("Engine");
  }
}

EngineConfig ResolveConfig(const std::string& file, CLI::App* cmd,
                           const std::map<std::string, std::string>& values) {
  EngineConfig config;
  if (!file.empty()) opentta::ApplyConfigFile(config, file);
  opentta::ApplyEnvironment(config);
  for (const auto& [name, value] : values) {
    if (cmd->count("--" + opentta::KebabCase(name)) > 0) {
      opentta::SetConfigValue(config, name, value);
    }
  }
  opentta::Validate(config);
  return config;
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw opentta::Error("cannot create " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming open-set test-time adaptation over embeddings"};
  app.require_subcommand(1);

  // run
  CLI::App* run = app.add_subcommand("run", "adapt over a stream and emit verdicts");
  opentta::RunOptions options;
  std::string config_file;
  bool show_config = false;
  std::map<std::string, std::string> flag_values;
  run->add_option("--protos", options.prototypes, "prototype file")->required();
  run->add_option("--stream", options.stream, "stream file (.csv/.txt for text)")
      ->required();
  run->add_option("--manifest", options.manifest, "ground-truth manifest");
  run->add_option("--verdicts", options.verdicts, "binary verdict output");
  run->add_option("--verdicts-csv", options.verdicts_csv, "CSV verdict output");
  run->add_option("--report", options.report, "metrics as key=value");
  run->add_option("--report-json", options.report_json, "metrics as JSON");
  run->add_option("--records-csv", options.records_csv,
                  "per-sample evaluation records");
  run->add_option("--cache-dump", options.cache_dump, "final visual cache");
  run->add_option("--config", config_file, "key=value config file");
  run->add_flag("--show-config", show_config, "print the resolved config");
  AddConfigFlags(run, &flag_values);

  // report
  CLI::App* report = app.add_subcommand("report", "recompute metrics offline");
  std::string verdicts_in, manifest_in, report_json, records_csv;
  report->add_option("--verdicts", verdicts_in, "binary verdict file")->required();
  report->add_option("--manifest", manifest_in, "ground-truth manifest")->required();
  report->add_option("--json", report_json, "also write JSON here");
  report->add_option("--records-csv", records_csv, "per-sample evaluation records");

  // synth
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic stream");
  opentta::SynthSpec spec;
  std::string prefix;
  synth->add_option("--out", prefix, "output prefix")->required();
  synth->add_option("--dim", spec.dim, "embedding dimension")->capture_default_str();
  synth->add_option("--k-id", spec.k_id, "csID classes")->capture_default_str();
  synth->add_option("--k-ood", spec.k_ood, "csOOD clusters")->capture_default_str();
  synth->add_option("--samples", spec.samples, "stream length")->capture_default_str();
  synth->add_option("--ood-fraction", spec.ood_fraction, "csOOD share")
      ->capture_default_str();
  synth->add_option("--concentration", spec.concentration,
                    "inverse per-coordinate noise scale")
      ->capture_default_str();
  synth->add_option("--drift", spec.drift, "csID center rotation, radians")
      ->capture_default_str();
  synth->add_option("--max-center-cosine", spec.max_center_cosine,
                    "pairwise center cosine bound")
      ->capture_default_str();
  synth->add_option("--shared-weight", spec.shared_weight,
                    "common-direction weight of the class centers")
      ->capture_default_str();
  synth->add_option("--seed", spec.seed, "random seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const EngineConfig config = ResolveConfig(config_file, run, flag_values);
      if (show_config) std::cerr << opentta::FormatConfig(config);
      const opentta::RunResult result = opentta::RunPipeline(config, options);
      std::printf("samples=%lld\n", result.samples);
      std::printf("accepted=%lld\n", result.accepted);
      std::printf("processing_seconds=%.6f\n", result.processing_seconds);
      if (result.processing_seconds > 0.0) {
        std::printf("samples_per_second=%.1f\n",
                    result.samples / result.processing_seconds);
      }
      if (result.report) std::fputs(opentta::FormatKeyValue(*result.report).c_str(), stdout);
    } else if (*report) {
      const auto verdicts = opentta::ReadVerdicts(verdicts_in);
      const auto labels = opentta::ReadManifest(manifest_in);
      const opentta::MetricsReport r = opentta::ComputeReport(verdicts, labels);
      std::fputs(opentta::FormatKeyValue(r).c_str(), stdout);
      if (!report_json.empty()) WriteFile(report_json, opentta::FormatJson(r));
      if (!records_csv.empty()) {
        std::ofstream out(records_csv);
        if (!out) throw opentta::Error("cannot create " + records_csv);
        opentta::WriteRecordsCsv(out, verdicts, labels);
      }
    } else if (*synth) {
      const opentta::SynthData data = opentta::Generate(spec);
      const opentta::SynthPaths paths = opentta::WriteSynth(data, prefix);
      std::printf("prototypes=%s\nstream=%s\nmanifest=%s\n",
                  paths.prototypes.c_str(), paths.stream.c_str(),
                  paths.manifest.c_str());
      const auto oracle = opentta::NearestPrototypeRecords(data.prototypes, data.stream);
      const auto n_id = std::count_if(data.labels.begin(), data.labels.end(),
                                      [](int label) { return label >= 0; });
      const auto n_ood = static_cast<std::ptrdiff_t>(data.labels.size()) - n_id;
      if (n_id > 0) {
        std::printf("oracle_accuracy=%.6f\n", opentta::Accuracy(oracle));
      }
      if (n_id > 0 && n_ood > 0) {
        std::printf("oracle_auroc=%.6f\n", opentta::Auroc(oracle));
        std::printf("oracle_fpr95=%.6f\n", opentta::FprAtTpr95(oracle));
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "opentta: error: %s\n", e.what());
    return 1;
  }
  return 0;
}

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

// The online adaptation loop. Per sample:
//
//   1. openness against the global text prototypes, push into W_c,
//      percentile thresholds, triage; confident samples enter the cache
//      under their initial predicted class (undone if stage 3 flags them,
//      see revert_flagged_admission);
//   2. visual prototypes from the cache; trustworthy samples take one
//      optimization step on zero residuals to get temporary prototypes;
//   3. final openness against the temporary text prototypes, push into W_g,
//      mixture (or fallback) verification;
//   4. dual-source prediction; confirmed csID samples that pass the quality
//      gate update the text prototypes by cumulative average and are
//      buffered for the next cache flush.
//
// Labels never enter Process().

#ifndef OPENTTA_PIPELINE_H_
#define OPENTTA_PIPELINE_H_

#include <optional>
#include <string>
#include <vector>

#include "opentta/alignment.h"
#include "opentta/cache.h"
#include "opentta/core.h"
#include "opentta/evidential.h"
#include "opentta/evolution.h"
#include "opentta/gating.h"
#include "opentta/metrics.h"
#include "opentta/verifier.h"

namespace opentta {

struct AdaptationState {
  AdaptationState(PrototypeSet text, const EngineConfig& config);

  PrototypeSet text_protos;
  VisualCache cache;
  ScoreWindow window_c;
  ScoreWindow window_g;
  long long n = 0;
  long long n_proc = 0;
  QualityGate gate;
  Verifier verifier;
  EvolutionBuffer buffer;

  double theta_q() const { return gate.theta_q(); }
  double theta_c() const { return verifier.theta_c(); }
};

class Pipeline {
 public:
  // Requires at least two classes.
  Pipeline(PrototypeSet text, const EngineConfig& config);

  SampleVerdict Process(const Vector& f);

  const AdaptationState& state() const { return state_; }
  const EngineConfig& config() const { return config_; }
  long long flushes() const { return flushes_; }
  long long alignment_updates() const { return alignment_updates_; }

 private:
  // Quantities derived from P_t and the cache, kept in step with them.
  struct Workspace {
    Matrix text_unit;      // rows of P_t / |P_t|
    Vector text_norms;
    PrototypeSet visual;   // cache means
    Matrix visual_unit;
    Vector visual_norms;
    Matrix shifted_text;   // P_t - lr_text * alignment text gradient
    Vector shifted_sq;     // squared row norms of shifted_text
    Vector shifted_dot;    // shifted_text_k . text_unit_k
    Vector shifted_visual_norms;  // |P_v - lr_vis * alignment visual gradient|
    // Rows with a nonzero alignment gradient.
    std::vector<char> text_moves, visual_moves;
    std::vector<int> text_moved, visual_moved;
  };

  void RefreshText();
  void RefreshVisualRow(int k);
  void ApplyAlignment();

  EngineConfig config_;
  AdaptationState state_;
  AlignmentTracker alignment_;
  Workspace ws_;
  long long flushes_ = 0;
  long long alignment_updates_ = 0;
};

struct RunOptions {
  std::string prototypes;
  std::string stream;
  std::string manifest;       // optional
  std::string verdicts;       // optional binary verdict output
  std::string verdicts_csv;   // optional
  std::string report;         // optional key=value output
  std::string report_json;    // optional
  std::string records_csv;    // optional, needs a manifest
  std::string cache_dump;     // optional
};

struct RunResult {
  long long samples = 0;
  double processing_seconds = 0.0;  // time inside Process(), no file IO
  std::optional<MetricsReport> report;
  long long accepted = 0;
  double theta_q = 0.0;
  double theta_c = 0.0;
};

RunResult RunPipeline(const EngineConfig& config, const RunOptions& options);

// Offline metrics from a verdict file and a manifest.
MetricsReport ReportFromFiles(const std::string& verdicts,
                              const std::string& manifest);

}  // namespace opentta

#endif  // OPENTTA_PIPELINE_H_

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


// Test fixtures and independent oracles shared by the unit tests and the
// acceptance binary.

#ifndef OPENTTA_TESTS_TESTING_H_
#define OPENTTA_TESTS_TESTING_H_

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "opentta/cache.h"
#include "opentta/core.h"
#include "opentta/evidential.h"
#include "opentta/evolution.h"
#include "opentta/gating.h"
#include "opentta/metrics.h"
#include "opentta/synth.h"
#include "opentta/verifier.h"

namespace opentta::testing {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string File(const std::string& name) const;

 private:
  std::filesystem::path path_;
};

Vector RandomGaussian(std::mt19937_64& rng, int dim);
Vector RandomUnit(std::mt19937_64& rng, int dim);

// Unnormalized Gaussian rows; each row is absent with `absent_probability`.
PrototypeSet RandomPrototypes(std::mt19937_64& rng, int num_classes, int dim,
                              double absent_probability = 0.0);

// Central differences of TotalLoss(ApplyResiduals(...)) with respect to every
// residual entry. Absent visual rows get zero.
Gradients NumericGradients(const Vector& f, const PrototypeSet& text,
                           const PrototypeSet& visual,
                           const Residuals& residuals,
                           const EngineConfig& config, double h);

// max over entries of |a - b| / max(|a|, |b|, floor).
double MaxRelativeError(const Matrix& a, const Matrix& b, double floor);

// Pair counting, ties one half.
double BruteAuroc(std::span<const EvalRecord> records);
// Every candidate threshold tried independently.
double BruteFprAtTpr95(std::span<const EvalRecord> records);
double BruteOscr(std::span<const EvalRecord> records);

// The per-sample loop written directly from the module operations, with
// visual prototypes recomputed from the cache and the full optimizer step on
// every sample.
class ReferenceEngine {
 public:
  ReferenceEngine(PrototypeSet text, const EngineConfig& config);

  SampleVerdict Process(const Vector& f);

  const PrototypeSet& text() const { return text_; }
  const VisualCache& cache() const { return cache_; }
  long long n() const { return n_; }
  double theta_q() const { return gate_.theta_q(); }

 private:
  EngineConfig config_;
  PrototypeSet text_;
  VisualCache cache_;
  ScoreWindow window_c_;
  ScoreWindow window_g_;
  long long n_ = 0;
  long long n_proc_ = 0;
  QualityGate gate_;
  Verifier verifier_;
  EvolutionBuffer buffer_;
};

// Streams used by the end-to-end checks.
SynthSpec SeparatedStreamSpec();
SynthSpec OverlappingStreamSpec();
SynthSpec ThroughputStreamSpec();

}  // namespace opentta::testing

#endif  // OPENTTA_TESTS_TESTING_H_

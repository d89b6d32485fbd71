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

// Deterministic synthetic csID/csOOD embedding streams.
//
// Class centers are random unit vectors with pairwise cosine below
// `max_center_cosine`. The prototype file holds the pristine csID centers;
// stream samples are drawn around centers rotated by `drift` radians (a
// covariate shift) with per-coordinate Gaussian noise of scale
// 1/concentration, then renormalized. csOOD samples come from separate
// centers and carry label -1.
//
// Every random draw comes from a per-section generator derived from the seed,
// so e.g. adding csOOD clusters leaves the csID draws untouched. Normals use
// Box-Muller over mt19937_64, both fully specified, so output is identical
// across standard libraries.

#ifndef OPENTTA_SYNTH_H_
#define OPENTTA_SYNTH_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "opentta/core.h"
#include "opentta/io.h"
#include "opentta/metrics.h"

namespace opentta {

struct SynthSpec {
  int dim = 64;
  int k_id = 10;
  int k_ood = 5;
  int samples = 5000;
  double ood_fraction = 0.3;
  double concentration = 10.0;
  double drift = 0.0;
  double max_center_cosine = 0.5;
  // Weight of a direction common to the csID centers (and, separately, to
  // the csOOD centers). Pairwise center cosine is then about this value.
  double shared_weight = 0.0;
  std::uint64_t seed = 0;
};

struct SynthData {
  PrototypeSet prototypes;
  std::vector<StreamRecord> stream;
  std::vector<int> labels;  // same as the stream labels
};

// Throws Error when the spec is invalid or the separation bound cannot be met.
SynthData Generate(const SynthSpec& spec);

// Writes <prefix>.protos, <prefix>.stream and <prefix>.manifest.
struct SynthPaths {
  std::string prototypes;
  std::string stream;
  std::string manifest;
};
SynthPaths WriteSynth(const SynthData& data, const std::string& prefix);

// Zero-shot baseline: nearest pristine prototype, confidence = max cosine.
std::vector<EvalRecord> NearestPrototypeRecords(
    const PrototypeSet& prototypes, const std::vector<StreamRecord>& stream);

// Normal draws via Box-Muller on a mt19937_64.
class SynthRng {
 public:
  SynthRng(std::uint64_t seed, std::uint64_t section);

  double Uniform();  // (0, 1]
  double Normal();
  // Uniform integer in [0, n), by rejection.
  std::uint64_t Below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace opentta

#endif  // OPENTTA_SYNTH_H_

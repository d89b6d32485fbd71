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

// Dual-source prediction and the asymmetric evolution of global prototypes
// from confirmed, quality-gated in-distribution samples.

#ifndef OPENTTA_EVOLUTION_H_
#define OPENTTA_EVOLUTION_H_

#include <vector>

#include "opentta/cache.h"
#include "opentta/core.h"

namespace opentta {

// scale * exp(-decay * (1 - cos(f, v_k))) for present visual classes, 0
// otherwise.
Vector VisualAffinity(const Vector& f, const PrototypeSet& visual, double scale,
                      double decay);

struct Prediction {
  int predicted_class = -1;
  Vector combined;  // textual softmax + visual affinity
};

Prediction DualSourcePredict(const Vector& f, const PrototypeSet& text_tmp,
                             const PrototypeSet& visual_tmp,
                             const EngineConfig& config);

// (1 - 1/n) * P_t + (1/n) * P_t'. No renormalization. n >= 1.
PrototypeSet CmaUpdate(const PrototypeSet& text, const PrototypeSet& text_tmp,
                       long long n);

// EMA-tightened aleatoric-uncertainty gate.
class QualityGate {
 public:
  QualityGate(double theta_q, double gamma);

  // Accepts iff au < theta_q; on acceptance theta_q moves toward au.
  bool Admit(double au);

  double theta_q() const { return theta_q_; }
  double gamma() const { return gamma_; }

 private:
  double theta_q_;
  double gamma_;
};

// Holds accepted samples until the next flush into the visual cache.
class EvolutionBuffer {
 public:
  struct Entry {
    int class_k;
    CachedItem item;
  };

  void Add(int class_k, CachedItem item);
  // Feeds every entry to the cache in arrival order, then clears.
  int Flush(VisualCache& cache, double tau_sim);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

}  // namespace opentta

#endif  // OPENTTA_EVOLUTION_H_

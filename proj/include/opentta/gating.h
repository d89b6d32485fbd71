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

// First-check stage: openness scores, sliding score windows and the
// percentile-driven three-tier triage.

#ifndef OPENTTA_GATING_H_
#define OPENTTA_GATING_H_

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "opentta/core.h"

namespace opentta {

// 1 - max cosine(f, p_k) over present classes. In [0, 2].
double OpennessScore(const Vector& f, const PrototypeSet& protos);

// Same, from precomputed cosines.
double OpennessFromCosines(const Vector& cosines,
                           const std::vector<bool>& present);

// Nearest-rank percentile: the ceil(q*m)-th smallest value (1-based).
double Percentile(std::span<const double> values, double q);

struct GateThresholds {
  double theta_a = 0.0;
  double theta_b = 0.0;
};

// Bounded FIFO of recent scores.
class ScoreWindow {
 public:
  explicit ScoreWindow(std::size_t capacity);

  void Push(double score);

  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return buffer_.empty(); }

  // Oldest first.
  std::vector<double> Values() const {
    return {buffer_.begin(), buffer_.end()};
  }

  double Percentile(double q) const;
  // Both thresholds from a single sort.
  GateThresholds Thresholds(double q_a, double q_b) const;

 private:
  std::size_t capacity_;
  std::deque<double> buffer_;
};

Tier Triage(double s_open, const GateThresholds& thresholds);

}  // namespace opentta

#endif  // OPENTTA_GATING_H_

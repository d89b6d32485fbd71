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

#include "opentta/gating.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace opentta {

namespace {

// 1-based nearest rank, guarded against q*m landing a hair above an integer
// (0.3 * 10 == 3.0000000000000004).
std::size_t NearestRank(double q, std::size_t m) {
  const double raw = q * static_cast<double>(m);
  auto rank = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(rank, 1, m);
}

}  // namespace

double OpennessFromCosines(const Vector& cosines,
                           const std::vector<bool>& present) {
  const int best = ArgmaxPresent(cosines, present);
  if (best < 0) throw Error("openness score needs a present prototype");
  return 1.0 - cosines[best];
}

double OpennessScore(const Vector& f, const PrototypeSet& protos) {
  return OpennessFromCosines(CosineToRows(f, protos), protos.present_flags());
}

double Percentile(std::span<const double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty window");
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t rank = NearestRank(q, sorted.size());
  std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
  return sorted[rank - 1];
}

ScoreWindow::ScoreWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error("window capacity must be positive");
}

void ScoreWindow::Push(double score) {
  if (!std::isfinite(score)) throw Error("non-finite score");
  buffer_.push_back(score);
  if (buffer_.size() > capacity_) buffer_.pop_front();
}

double ScoreWindow::Percentile(double q) const {
  const std::vector<double> values = Values();
  return opentta::Percentile(values, q);
}

GateThresholds ScoreWindow::Thresholds(double q_a, double q_b) const {
  if (buffer_.empty()) throw Error("percentile of an empty window");
  std::vector<double> sorted = Values();
  std::sort(sorted.begin(), sorted.end());
  return {sorted[NearestRank(q_a, sorted.size()) - 1],
          sorted[NearestRank(q_b, sorted.size()) - 1]};
}

Tier Triage(double s_open, const GateThresholds& thresholds) {
  if (s_open < thresholds.theta_a) return Tier::kConfident;
  if (s_open < thresholds.theta_b) return Tier::kTrustworthy;
  return Tier::kSkipped;
}

}  // namespace opentta

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

#ifndef OPENTTA_CACHE_H_
#define OPENTTA_CACHE_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "opentta/core.h"

namespace opentta {

// A cached feature with the logits it was admitted with. `quality` is the
// aleatoric uncertainty of those logits (lower is better).
struct CachedItem {
  Vector feature;
  Vector logits;
  double quality = 0.0;
};

// Normalizes `feature` and scores the logits.
CachedItem MakeCachedItem(const Vector& feature, Vector logits,
                          double evidence_scale);

enum class CacheAction { kAppended, kReplacedSimilar, kReplacedWorst, kKept };

struct CacheUpdateResult {
  CacheAction action = CacheAction::kKept;
  int slot = -1;
  int cosine_evaluations = 0;
  std::optional<CachedItem> displaced;  // the item a replacement removed
};

// Per-class bounded queues with the diversity/quality replacement policy:
//  - if the closest stored feature has cosine > tau_sim, the newcomer replaces
//    it only when its quality value is strictly lower;
//  - otherwise it is appended, or, on a full queue, replaces the item with the
//    highest quality value.
// Ties (most similar, worst quality) go to the lowest slot index.
class VisualCache {
 public:
  VisualCache(int num_classes, int dim, int capacity);

  CacheUpdateResult Update(int class_k, CachedItem item, double tau_sim);
  // Undoes the most recent Update() of class_k, given its result.
  void Revert(int class_k, CacheUpdateResult result);

  // Mean of each non-empty queue; empty queues are absent.
  PrototypeSet Prototypes() const;
  // Row k of Prototypes(): writes the mean into `out` (zero when absent) and
  // returns whether the class is present.
  bool Mean(int k, Eigen::Ref<Eigen::RowVectorXd> out) const;

  const std::vector<CachedItem>& queue(int k) const { return queues_[k]; }
  int num_classes() const { return static_cast<int>(queues_.size()); }
  int dim() const { return dim_; }
  int capacity() const { return capacity_; }
  int TotalItems() const;
  // Bumped on every mutation.
  std::uint64_t version() const { return version_; }

 private:
  int dim_;
  int capacity_;
  std::vector<std::vector<CachedItem>> queues_;
  std::uint64_t version_ = 0;
};

}  // namespace opentta

#endif  // OPENTTA_CACHE_H_

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

#include "opentta/cache.h"

#include <string>
#include <utility>

#include "opentta/evidential.h"

namespace opentta {

CachedItem MakeCachedItem(const Vector& feature, Vector logits,
                          double evidence_scale) {
  CachedItem item;
  item.feature = L2Normalize(feature);
  item.quality = Aleatoric(Evidence(logits, evidence_scale));
  item.logits = std::move(logits);
  return item;
}

VisualCache::VisualCache(int num_classes, int dim, int capacity)
    : dim_(dim), capacity_(capacity), queues_(num_classes) {
  if (num_classes < 1) throw Error("cache needs at least one class");
  if (dim < 1) throw Error("cache dimension must be positive");
  if (capacity < 1) throw Error("cache capacity must be positive");
}

CacheUpdateResult VisualCache::Update(int class_k, CachedItem item,
                                      double tau_sim) {
  if (class_k < 0 || class_k >= num_classes()) {
    throw Error("cache class index out of range: " + std::to_string(class_k));
  }
  if (item.feature.size() != dim_) throw Error("cache feature dimension");
  std::vector<CachedItem>& queue = queues_[class_k];
  CacheUpdateResult result;

  int most_similar = -1;
  double s_max = 0.0;
  for (int i = 0; i < static_cast<int>(queue.size()); ++i) {
    // Stored and incoming features are unit rows.
    const double s = item.feature.dot(queue[i].feature);
    ++result.cosine_evaluations;
    if (most_similar < 0 || s > s_max) {
      s_max = s;
      most_similar = i;
    }
  }

  if (most_similar >= 0 && s_max > tau_sim) {
    if (item.quality < queue[most_similar].quality) {
      result.displaced = std::move(queue[most_similar]);
      queue[most_similar] = std::move(item);
      result.action = CacheAction::kReplacedSimilar;
      result.slot = most_similar;
      ++version_;
    }
    return result;
  }

  if (static_cast<int>(queue.size()) < capacity_) {
    queue.push_back(std::move(item));
    result.action = CacheAction::kAppended;
    result.slot = static_cast<int>(queue.size()) - 1;
    ++version_;
    return result;
  }

  int worst = 0;
  for (int i = 1; i < static_cast<int>(queue.size()); ++i) {
    if (queue[i].quality > queue[worst].quality) worst = i;
  }
  result.displaced = std::move(queue[worst]);
  queue[worst] = std::move(item);
  result.action = CacheAction::kReplacedWorst;
  result.slot = worst;
  ++version_;
  return result;
}

void VisualCache::Revert(int class_k, CacheUpdateResult result) {
  if (class_k < 0 || class_k >= num_classes()) {
    throw Error("cache class index out of range: " + std::to_string(class_k));
  }
  std::vector<CachedItem>& queue = queues_[class_k];
  switch (result.action) {
    case CacheAction::kKept:
      return;
    case CacheAction::kAppended:
      if (result.slot != static_cast<int>(queue.size()) - 1) {
        throw Error("cache revert does not match the last append");
      }
      queue.pop_back();
      break;
    case CacheAction::kReplacedSimilar:
    case CacheAction::kReplacedWorst:
      if (!result.displaced || result.slot < 0 ||
          result.slot >= static_cast<int>(queue.size())) {
        throw Error("cache revert without the displaced item");
      }
      queue[result.slot] = std::move(*result.displaced);
      break;
  }
  ++version_;
}

bool VisualCache::Mean(int k, Eigen::Ref<Eigen::RowVectorXd> out) const {
  out.setZero();
  const auto& queue = queues_[k];
  if (queue.empty()) return false;
  for (const CachedItem& item : queue) out += item.feature.transpose();
  out /= static_cast<double>(queue.size());
  // Antipodal members can cancel; such a row carries no direction.
  return out.norm() > 1e-12;
}

PrototypeSet VisualCache::Prototypes() const {
  Matrix rows(num_classes(), dim_);
  std::vector<bool> present(num_classes(), false);
  for (int k = 0; k < num_classes(); ++k) present[k] = Mean(k, rows.row(k));
  return PrototypeSet(std::move(rows), std::move(present));
}

int VisualCache::TotalItems() const {
  int total = 0;
  for (const auto& q : queues_) total += static_cast<int>(q.size());
  return total;
}

}  // namespace opentta

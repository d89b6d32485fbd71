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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "opentta/evidential.h"
#include "testing.h"

namespace opentta {
namespace {

CachedItem Item(double x, double y, double quality) {
  CachedItem item;
  item.feature = Vector(2);
  item.feature << x, y;
  item.feature.normalize();
  item.logits = Vector::Zero(2);
  item.quality = quality;
  return item;
}

// Unit vectors at distinct angles, far apart for tau_sim = 0.9.
CachedItem Spread(int i, double quality) {
  const double angle = 0.6 * i;
  return Item(std::cos(angle), std::sin(angle), quality);
}

std::vector<double> Qualities(const VisualCache& cache, int k) {
  std::vector<double> q;
  for (const CachedItem& item : cache.queue(k)) q.push_back(item.quality);
  return q;
}

TEST(VisualCacheTest, AppendToEmptyQueue) {
  VisualCache cache(2, 2, 5);
  const CacheUpdateResult r = cache.Update(1, Item(1, 0, 0.4), 0.9);
  EXPECT_EQ(r.action, CacheAction::kAppended);
  EXPECT_EQ(cache.queue(1).size(), 1u);
  EXPECT_TRUE(cache.queue(0).empty());
}

TEST(VisualCacheTest, SimilarItemWithLowerUncertaintyReplaces) {
  VisualCache cache(1, 2, 5);
  cache.Update(0, Item(1, 0, 0.5), 0.9);
  const double y = std::sqrt(1.0 - 0.95 * 0.95);
  const CacheUpdateResult r = cache.Update(0, Item(0.95, y, 0.3), 0.9);
  EXPECT_EQ(r.action, CacheAction::kReplacedSimilar);
  ASSERT_EQ(cache.queue(0).size(), 1u);
  EXPECT_EQ(cache.queue(0)[0].quality, 0.3);
  ASSERT_TRUE(r.displaced.has_value());
  EXPECT_EQ(r.displaced->quality, 0.5);
}

TEST(VisualCacheTest, SimilarItemWithHigherUncertaintyIsDropped) {
  VisualCache cache(1, 2, 5);
  cache.Update(0, Item(1, 0, 0.3), 0.9);
  const uint64_t version = cache.version();
  const double y = std::sqrt(1.0 - 0.95 * 0.95);
  const CacheUpdateResult r = cache.Update(0, Item(0.95, y, 0.5), 0.9);
  EXPECT_EQ(r.action, CacheAction::kKept);
  EXPECT_EQ(cache.queue(0)[0].quality, 0.3);
  EXPECT_EQ(cache.version(), version);
}

TEST(VisualCacheTest, FullQueueEvictsHighestUncertainty) {
  VisualCache cache(1, 2, 5);
  const std::vector<double> au = {0.2, 0.3, 0.6, 0.4, 0.5};
  for (int i = 0; i < 5; ++i) cache.Update(0, Spread(i, au[i]), 0.9);
  // Angle 0.6 * 8 is at least 0.6 rad from every stored angle.
  const CacheUpdateResult r = cache.Update(0, Spread(8, 0.1), 0.9);
  EXPECT_EQ(r.action, CacheAction::kReplacedWorst);
  EXPECT_EQ(r.slot, 2);
  EXPECT_EQ(Qualities(cache, 0), (std::vector<double>{0.2, 0.3, 0.1, 0.4, 0.5}));
}

TEST(VisualCacheTest, TiesGoToTheLowestSlot) {
  VisualCache cache(1, 2, 3);
  cache.Update(0, Item(1, 0, 0.7), 0.999);
  cache.Update(0, Item(1, 0.01, 0.7), 0.99999);  // appended: below 0.99999
  cache.Update(0, Item(0, 1, 0.7), 0.9);
  // Worst-quality tie across all three slots.
  const CacheUpdateResult worst = cache.Update(0, Item(-1, 0, 0.1), 0.9);
  EXPECT_EQ(worst.slot, 0);

  VisualCache dup(1, 2, 5);
  dup.Update(0, Item(1, 0, 0.5), 2.0);
  dup.Update(0, Item(1, 0, 0.5), 2.0);  // tau_sim 2: never similar
  const CacheUpdateResult sim = dup.Update(0, Item(1, 0, 0.1), 0.9);
  EXPECT_EQ(sim.action, CacheAction::kReplacedSimilar);
  EXPECT_EQ(sim.slot, 0);
}

TEST(VisualCacheTest, PrototypesAreQueueMeans) {
  VisualCache cache(3, 2, 5);
  cache.Update(0, Item(1, 0, 0.1), 0.9);
  cache.Update(1, Item(1, 0, 0.1), 0.9);
  cache.Update(1, Item(0, 1, 0.1), 0.9);
  const PrototypeSet p = cache.Prototypes();
  EXPECT_TRUE(p.present(0));
  EXPECT_TRUE(p.present(1));
  EXPECT_FALSE(p.present(2));
  EXPECT_EQ(p.row(0)(0), 1.0);
  EXPECT_EQ(p.row(0)(1), 0.0);
  EXPECT_EQ(p.row(1)(0), 0.5);
  EXPECT_EQ(p.row(1)(1), 0.5);

  const PrototypeSet empty = VisualCache(4, 2, 5).Prototypes();
  EXPECT_EQ(empty.num_present(), 0);
}

TEST(VisualCacheTest, RandomOperationSequences) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, 3);
  VisualCache cache(4, 3, 5);
  int similar = 0, worst = 0;
  for (int op = 0; op < 10000; ++op) {
    CachedItem item;
    item.feature = testing::RandomUnit(rng, 3);
    item.logits = Vector::Zero(4);
    item.quality = u(rng);
    const int k = cls(rng);
    const CacheUpdateResult r = cache.Update(k, item, 0.9);
    ASSERT_LE(r.cosine_evaluations, 5);
    for (int c = 0; c < 4; ++c) ASSERT_LE(cache.queue(c).size(), 5u);
    if (r.action == CacheAction::kReplacedSimilar) {
      ++similar;
      ASSERT_LT(cache.queue(k)[r.slot].quality, r.displaced->quality);
    }
    if (r.action == CacheAction::kReplacedWorst) ++worst;
  }
  EXPECT_GT(similar, 100);
  EXPECT_GT(worst, 100);
}

TEST(VisualCacheTest, RevertRestoresThePreviousState) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  VisualCache cache(2, 3, 3);
  for (int op = 0; op < 2000; ++op) {
    CachedItem item;
    item.feature = testing::RandomUnit(rng, 3);
    item.logits = Vector::Zero(2);
    item.quality = u(rng);
    const int k = op % 2;
    const VisualCache before = cache;
    CacheUpdateResult r = cache.Update(k, item, 0.8);
    if (op % 3 == 0) {
      cache.Revert(k, std::move(r));
      for (int c = 0; c < 2; ++c) {
        ASSERT_EQ(cache.queue(c).size(), before.queue(c).size());
        for (std::size_t i = 0; i < cache.queue(c).size(); ++i) {
          ASSERT_EQ(cache.queue(c)[i].feature, before.queue(c)[i].feature);
          ASSERT_EQ(cache.queue(c)[i].quality, before.queue(c)[i].quality);
        }
      }
    }
  }
}

TEST(VisualCacheTest, MakeCachedItemScoresAleatoric) {
  Vector f(2), z(2);
  f << 3, 4;
  z << 0.8, -0.2;
  const CachedItem item = MakeCachedItem(f, z, 10.0);
  EXPECT_NEAR(item.feature.norm(), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(item.quality, Aleatoric(Evidence(z, 10.0)));
}

TEST(VisualCacheTest, RejectsBadArguments) {
  VisualCache cache(2, 2, 5);
  EXPECT_THROW(cache.Update(2, Item(1, 0, 0.1), 0.9), Error);
  EXPECT_THROW(VisualCache(2, 2, 0), Error);
  CachedItem wrong;
  wrong.feature = Vector::Ones(3);
  EXPECT_THROW(cache.Update(0, wrong, 0.9), Error);
}

}  // namespace
}  // namespace opentta

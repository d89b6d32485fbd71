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


#include "opentta/metrics.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "testing.h"

namespace opentta {
namespace {

using testing::BruteAuroc;
using testing::BruteFprAtTpr95;
using testing::BruteOscr;

EvalRecord Id(int label, int predicted, double conf) {
  return {label, predicted, conf};
}
EvalRecord Ood(double conf) { return {-1, 0, conf}; }

std::vector<EvalRecord> RandomRecords(std::mt19937_64& rng, int n,
                                      int levels) {
  std::uniform_int_distribution<int> level(0, levels - 1);
  std::uniform_int_distribution<int> label(-1, 3);
  std::uniform_int_distribution<int> pred(0, 3);
  std::vector<EvalRecord> r(n);
  for (EvalRecord& e : r) {
    e = {label(rng), pred(rng), static_cast<double>(level(rng)) / levels};
  }
  r[0].true_label = -1;
  r[1].true_label = 2;
  return r;
}

TEST(AccuracyTest, Examples) {
  std::vector<EvalRecord> r = {Id(0, 0, 0.5), Id(1, 1, 0.5)};
  EXPECT_EQ(Accuracy(r), 1.0);
  r[1].predicted_class = 0;
  EXPECT_EQ(Accuracy(r), 0.5);
  r.push_back(Ood(0.9));
  r.push_back(Ood(0.1));
  EXPECT_EQ(Accuracy(r), 0.5);
  EXPECT_THROW(Accuracy(std::vector<EvalRecord>{Ood(0.1)}), Error);
}

TEST(AurocTest, Examples) {
  EXPECT_EQ(Auroc(std::vector<EvalRecord>{Id(0, 0, 0.9), Ood(0.1)}), 1.0);
  EXPECT_EQ(Auroc(std::vector<EvalRecord>{Id(0, 0, 0.5), Id(1, 0, 0.5),
                                          Ood(0.5)}),
            0.5);
  EXPECT_EQ(Auroc(std::vector<EvalRecord>{Id(0, 0, 0.9), Id(0, 0, 0.4),
                                          Ood(0.6)}),
            0.5);
  EXPECT_THROW(Auroc(std::vector<EvalRecord>{Id(0, 0, 0.9)}), Error);
  EXPECT_THROW(Auroc(std::vector<EvalRecord>{Ood(0.9)}), Error);
}

TEST(AurocTest, MatchesPairCounting) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto r = RandomRecords(rng, 2 + t % 60, 1 + t % 9);
    EXPECT_NEAR(Auroc(r), BruteAuroc(r), 1e-12);
  }
}

TEST(AurocTest, MonotoneTransformAndPermutation) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    auto r = RandomRecords(rng, 50, 20);
    const double base = Auroc(r);
    auto mapped = r;
    for (EvalRecord& e : mapped) e.confidence = std::exp(3.0 * e.confidence) - 7;
    EXPECT_NEAR(Auroc(mapped), base, 1e-12);
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_NEAR(Auroc(r), base, 1e-12);
  }
}

TEST(FprTest, Examples) {
  EXPECT_EQ(FprAtTpr95(std::vector<EvalRecord>{Id(0, 0, 0.9), Ood(0.1)}), 0.0);
  // A single csID record: TPR jumps to 1 at its confidence.
  EXPECT_EQ(FprAtTpr95(std::vector<EvalRecord>{Id(0, 0, 0.5), Ood(0.9),
                                               Ood(0.5), Ood(0.4), Ood(0.1)}),
            0.5);
}

TEST(FprTest, MatchesThresholdEnumeration) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const auto r = RandomRecords(rng, 2 + t % 70, 1 + t % 11);
    EXPECT_NEAR(FprAtTpr95(r), BruteFprAtTpr95(r), 1e-12);
  }
}

TEST(FprTest, IdenticalDistributions) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<EvalRecord> r;
  for (int i = 0; i < 20000; ++i) r.push_back(Id(0, 0, u(rng)));
  for (int i = 0; i < 20000; ++i) r.push_back(Ood(u(rng)));
  EXPECT_NEAR(FprAtTpr95(r), 0.95, 0.03);
}

TEST(OscrTest, Examples) {
  EXPECT_EQ(Oscr(std::vector<EvalRecord>{Id(0, 0, 1.0), Id(1, 1, 1.0),
                                         Ood(0.0)}),
            1.0);
  EXPECT_EQ(Oscr(std::vector<EvalRecord>{Id(0, 1, 1.0), Id(1, 0, 0.5),
                                         Ood(0.0)}),
            0.0);
}

TEST(OscrTest, MatchesThresholdEnumerationAndStaysBelowAccuracy) {
  std::mt19937_64 rng(5);
  const std::vector<EvalRecord> toy = {Id(0, 0, 0.8), Id(1, 0, 0.6), Ood(0.7)};
  EXPECT_NEAR(Oscr(toy), BruteOscr(toy), 1e-15);
  EXPECT_NEAR(Oscr(toy), 0.5, 1e-15);
  for (int t = 0; t < 200; ++t) {
    auto r = RandomRecords(rng, 2 + t % 50, 1 + t % 13);
    EXPECT_NEAR(Oscr(r), BruteOscr(r), 1e-12);
    EXPECT_LE(Oscr(r), Accuracy(r) + 1e-12);
    const double base = Oscr(r);
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_NEAR(Oscr(r), base, 1e-12);
  }
}

std::vector<SampleVerdict> Verdicts() {
  std::vector<SampleVerdict> v(4);
  v[0] = {0, 0.1, 0.1, 0.0, Tier::kConfident, false, 0.1, 0.1, true};
  v[1] = {1, 0.2, 0.3, 0.2, Tier::kTrustworthy, false, 0.2, 0.2, false};
  v[2] = {1, 0.6, 0.7, 0.9, Tier::kSkipped, true, 0.3, 0.3, false};
  v[3] = {0, 0.5, 0.2, 0.6, Tier::kTrustworthy, true, 0.4, 0.4, false};
  return v;
}

TEST(ReportTest, Counts) {
  const std::vector<int> labels = {0, 0, -1, 1};
  const MetricsReport r = ComputeReport(Verdicts(), labels);
  EXPECT_EQ(r.records, 4);
  EXPECT_EQ(r.id_records, 3);
  EXPECT_EQ(r.ood_records, 1);
  EXPECT_EQ(r.confident, 1);
  EXPECT_EQ(r.trustworthy, 2);
  EXPECT_EQ(r.skipped, 1);
  EXPECT_EQ(r.flagged_ood, 2);
  EXPECT_EQ(r.accepted, 1);
  EXPECT_NEAR(r.acc, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.id_rejection_rate, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(r.ood_detection_rate, 1.0);
  EXPECT_EQ(r.auroc, 1.0);
}

TEST(ReportTest, LengthMismatchAndMissingKinds) {
  const std::vector<int> short_labels = {0, 0, -1};
  EXPECT_THROW(ComputeReport(Verdicts(), short_labels), Error);
  const std::vector<int> all_id = {0, 0, 1, 1};
  EXPECT_THROW(ComputeReport(Verdicts(), all_id), Error);
}

TEST(ReportTest, Formats) {
  const std::vector<int> labels = {0, 0, -1, 1};
  const MetricsReport r = ComputeReport(Verdicts(), labels);
  const std::string kv = FormatKeyValue(r);
  EXPECT_NE(kv.find("auroc="), std::string::npos);
  EXPECT_NE(kv.find("fpr_at_tpr95="), std::string::npos);
  const auto j = nlohmann::json::parse(FormatJson(r));
  EXPECT_DOUBLE_EQ(j.at("acc").get<double>(), r.acc);
  EXPECT_EQ(j.at("counts").at("records").get<long long>(), 4);

  std::ostringstream csv;
  WriteRecordsCsv(csv, Verdicts(), labels);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

}  // namespace
}  // namespace opentta

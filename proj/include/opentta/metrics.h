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

// Open-set evaluation. csID records (true_label >= 0) are the positive class;
// the score is confidence = 1 - final openness.

#ifndef OPENTTA_METRICS_H_
#define OPENTTA_METRICS_H_

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "opentta/core.h"

namespace opentta {

struct EvalRecord {
  int true_label = -1;  // -1: csOOD
  int predicted_class = -1;
  double confidence = 0.0;
};

// Fraction of csID records whose prediction matches, flagged or not.
double Accuracy(std::span<const EvalRecord> records);
// Mann-Whitney AUROC; ties count one half.
double Auroc(std::span<const EvalRecord> records);
// csOOD false-positive rate at the largest threshold reaching TPR >= 0.95.
double FprAtTpr95(std::span<const EvalRecord> records);
// Area under CCR vs FPR, from (0, 0) to (1, accuracy).
double Oscr(std::span<const EvalRecord> records);

struct MetricsReport {
  double acc = 0.0;
  double auroc = 0.0;
  double fpr_at_tpr95 = 0.0;
  double oscr = 0.0;

  long long records = 0;
  long long id_records = 0;
  long long ood_records = 0;
  long long confident = 0;
  long long trustworthy = 0;
  long long skipped = 0;
  long long flagged_ood = 0;
  long long accepted = 0;
  // csID records flagged as csOOD, over all csID records.
  double id_rejection_rate = 0.0;
  // csOOD records flagged as csOOD, over all csOOD records.
  double ood_detection_rate = 0.0;

  bool operator==(const MetricsReport&) const = default;
};

std::vector<EvalRecord> MakeEvalRecords(std::span<const SampleVerdict> verdicts,
                                        std::span<const int> labels);

// Throws when the labels and verdicts differ in length or either class is
// missing.
MetricsReport ComputeReport(std::span<const SampleVerdict> verdicts,
                            std::span<const int> labels);

// key=value lines.
std::string FormatKeyValue(const MetricsReport& report);
std::string FormatJson(const MetricsReport& report);

// One line per sample plus a header.
void WriteRecordsCsv(std::ostream& out, std::span<const SampleVerdict> verdicts,
                     std::span<const int> labels);

}  // namespace opentta

#endif  // OPENTTA_METRICS_H_

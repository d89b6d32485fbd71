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
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace opentta {

namespace {

struct Counts {
  long long id = 0;
  long long ood = 0;
};

Counts CountKinds(std::span<const EvalRecord> records) {
  Counts c;
  for (const EvalRecord& r : records) {
    if (r.true_label < -1) throw Error("record label below -1");
    if (!std::isfinite(r.confidence)) throw Error("non-finite confidence");
    if (r.true_label >= 0) {
      ++c.id;
    } else {
      ++c.ood;
    }
  }
  return c;
}

Counts RequireBothKinds(std::span<const EvalRecord> records) {
  const Counts c = CountKinds(records);
  if (c.id == 0 || c.ood == 0) {
    throw Error("metric needs both csID and csOOD records");
  }
  return c;
}

// Cumulative counts at each distinct confidence, highest first.
struct SweepPoint {
  double threshold;
  long long id;       // csID with confidence >= threshold
  long long correct;  // ... and correctly classified
  long long ood;      // csOOD with confidence >= threshold
};

std::vector<SweepPoint> Sweep(std::span<const EvalRecord> records) {
  std::vector<const EvalRecord*> order;
  order.reserve(records.size());
  for (const EvalRecord& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(),
            [](const EvalRecord* a, const EvalRecord* b) {
              return a->confidence > b->confidence;
            });
  std::vector<SweepPoint> points;
  SweepPoint cur{0.0, 0, 0, 0};
  for (std::size_t i = 0; i < order.size(); ++i) {
    const EvalRecord& r = *order[i];
    if (r.true_label >= 0) {
      ++cur.id;
      if (r.predicted_class == r.true_label) ++cur.correct;
    } else {
      ++cur.ood;
    }
    if (i + 1 == order.size() || order[i + 1]->confidence != r.confidence) {
      cur.threshold = r.confidence;
      points.push_back(cur);
    }
  }
  return points;
}

}  // namespace

double Accuracy(std::span<const EvalRecord> records) {
  long long id = 0, correct = 0;
  for (const EvalRecord& r : records) {
    if (r.true_label < 0) continue;
    ++id;
    if (r.predicted_class == r.true_label) ++correct;
  }
  if (id == 0) throw Error("no csID records");
  return static_cast<double>(correct) / static_cast<double>(id);
}

double Auroc(std::span<const EvalRecord> records) {
  const Counts c = RequireBothKinds(records);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].confidence < records[b].confidence;
  });
  // Sum of average ranks of the csID records.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           records[order[j + 1]].confidence == records[order[i]].confidence) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (records[order[t]].true_label >= 0) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double n_id = static_cast<double>(c.id);
  const double u = rank_sum - n_id * (n_id + 1.0) / 2.0;
  return u / (n_id * static_cast<double>(c.ood));
}

double FprAtTpr95(std::span<const EvalRecord> records) {
  const Counts c = RequireBothKinds(records);
  for (const SweepPoint& p : Sweep(records)) {
    // TPR >= 0.95 in exact integer arithmetic.
    if (20 * p.id >= 19 * c.id) {
      return static_cast<double>(p.ood) / static_cast<double>(c.ood);
    }
  }
  return 1.0;  // unreachable: the last point has TPR 1
}

double Oscr(std::span<const EvalRecord> records) {
  const Counts c = RequireBothKinds(records);
  const double n_id = static_cast<double>(c.id);
  const double n_ood = static_cast<double>(c.ood);
  double area = 0.0;
  double prev_fpr = 0.0, prev_ccr = 0.0;
  for (const SweepPoint& p : Sweep(records)) {
    const double fpr = static_cast<double>(p.ood) / n_ood;
    const double ccr = static_cast<double>(p.correct) / n_id;
    area += (fpr - prev_fpr) * (ccr + prev_ccr) / 2.0;
    prev_fpr = fpr;
    prev_ccr = ccr;
  }
  // Last sweep point already sits at (1, accuracy).
  return area;
}

std::vector<EvalRecord> MakeEvalRecords(std::span<const SampleVerdict> verdicts,
                                        std::span<const int> labels) {
  if (verdicts.size() != labels.size()) {
    throw Error("label count " + std::to_string(labels.size()) +
                " does not match verdict count " +
                std::to_string(verdicts.size()));
  }
  std::vector<EvalRecord> records(verdicts.size());
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    records[i] = {labels[i], verdicts[i].predicted_class,
                  1.0 - verdicts[i].s_open_final};
  }
  return records;
}

MetricsReport ComputeReport(std::span<const SampleVerdict> verdicts,
                            std::span<const int> labels) {
  const std::vector<EvalRecord> records = MakeEvalRecords(verdicts, labels);
  MetricsReport r;
  r.acc = Accuracy(records);
  r.auroc = Auroc(records);
  r.fpr_at_tpr95 = FprAtTpr95(records);
  r.oscr = Oscr(records);
  r.records = static_cast<long long>(records.size());
  long long id_flagged = 0, ood_flagged = 0;
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    const SampleVerdict& v = verdicts[i];
    const bool is_id = labels[i] >= 0;
    (is_id ? r.id_records : r.ood_records) += 1;
    switch (v.tier) {
      case Tier::kConfident:
        ++r.confident;
        break;
      case Tier::kTrustworthy:
        ++r.trustworthy;
        break;
      case Tier::kSkipped:
        ++r.skipped;
        break;
    }
    if (v.is_ood) {
      ++r.flagged_ood;
      (is_id ? id_flagged : ood_flagged) += 1;
    }
    if (v.accepted_for_evolution) ++r.accepted;
  }
  r.id_rejection_rate =
      static_cast<double>(id_flagged) / static_cast<double>(r.id_records);
  r.ood_detection_rate =
      static_cast<double>(ood_flagged) / static_cast<double>(r.ood_records);
  return r;
}

std::string FormatKeyValue(const MetricsReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "acc=" << r.acc << "\n"
      << "auroc=" << r.auroc << "\n"
      << "fpr_at_tpr95=" << r.fpr_at_tpr95 << "\n"
      << "oscr=" << r.oscr << "\n"
      << "records=" << r.records << "\n"
      << "id_records=" << r.id_records << "\n"
      << "ood_records=" << r.ood_records << "\n"
      << "confident=" << r.confident << "\n"
      << "trustworthy=" << r.trustworthy << "\n"
      << "skipped=" << r.skipped << "\n"
      << "flagged_ood=" << r.flagged_ood << "\n"
      << "accepted=" << r.accepted << "\n"
      << "id_rejection_rate=" << r.id_rejection_rate << "\n"
      << "ood_detection_rate=" << r.ood_detection_rate << "\n";
  return out.str();
}

std::string FormatJson(const MetricsReport& r) {
  nlohmann::json j;
  j["acc"] = r.acc;
  j["auroc"] = r.auroc;
  j["fpr_at_tpr95"] = r.fpr_at_tpr95;
  j["oscr"] = r.oscr;
  j["counts"] = {{"records", r.records},         {"id_records", r.id_records},
                 {"ood_records", r.ood_records}, {"confident", r.confident},
                 {"trustworthy", r.trustworthy}, {"skipped", r.skipped},
                 {"flagged_ood", r.flagged_ood}, {"accepted", r.accepted}};
  j["id_rejection_rate"] = r.id_rejection_rate;
  j["ood_detection_rate"] = r.ood_detection_rate;
  return j.dump(2) + "\n";
}

void WriteRecordsCsv(std::ostream& out, std::span<const SampleVerdict> verdicts,
                     std::span<const int> labels) {
  const std::vector<EvalRecord> records = MakeEvalRecords(verdicts, labels);
  out << "index,true_label,predicted_class,confidence,s_open_init,p_ood,"
         "is_ood,tier,au,eu,accepted\n";
  char buf[512];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SampleVerdict& v = verdicts[i];
    std::snprintf(buf, sizeof(buf), "%zu,%d,%d,%.17g,%.17g,%.17g,%d,%s,%.17g,%.17g,%d\n",
                  i, records[i].true_label, v.predicted_class,
                  records[i].confidence, v.s_open_init, v.p_ood,
                  v.is_ood ? 1 : 0, TierName(v.tier), v.au, v.eu,
                  v.accepted_for_evolution ? 1 : 0);
    out << buf;
  }
}

}  // namespace opentta

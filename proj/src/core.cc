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

#include "opentta/core.h"

#include <cmath>
#include <limits>
#include <string>

namespace opentta {

void CheckEmbedding(const Vector& v) {
  if (v.size() == 0) throw Error("empty embedding");
  if (!v.allFinite()) throw Error("embedding has non-finite entries");
}

double Cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("degenerate vector");
  return a.dot(b) / (na * nb);
}

Vector L2Normalize(const Vector& v) {
  const double n = v.norm();
  if (n == 0.0 || !std::isfinite(n)) throw Error("degenerate vector");
  return v / n;
}

PrototypeSet::PrototypeSet(Matrix rows)
    : rows_(std::move(rows)), present_(rows_.rows(), true) {}

PrototypeSet::PrototypeSet(Matrix rows, std::vector<bool> present)
    : rows_(std::move(rows)), present_(std::move(present)) {
  if (static_cast<Eigen::Index>(present_.size()) != rows_.rows()) {
    throw Error("presence flags do not match prototype rows");
  }
}

int PrototypeSet::num_present() const {
  int count = 0;
  for (bool p : present_) count += p ? 1 : 0;
  return count;
}

void PrototypeSet::set_class_names(std::vector<std::string> names) {
  if (!names.empty() && static_cast<int>(names.size()) != num_classes()) {
    throw Error("class name count does not match prototype rows");
  }
  names_ = std::move(names);
}

PrototypeSet PrototypeSet::Normalized() const {
  PrototypeSet out = *this;
  for (int k = 0; k < num_classes(); ++k) {
    if (present_[k]) {
      const double n = rows_.row(k).norm();
      if (n == 0.0) throw Error("degenerate prototype row " + std::to_string(k));
      out.rows_.row(k) /= n;
    } else {
      out.rows_.row(k).setZero();
    }
  }
  return out;
}

Vector CosineToRows(const Vector& f, const PrototypeSet& protos) {
  if (f.size() != protos.dim()) {
    throw Error("dimension mismatch: embedding " + std::to_string(f.size()) +
                " vs prototypes " + std::to_string(protos.dim()));
  }
  const double nf = f.norm();
  if (nf == 0.0) throw Error("degenerate vector");
  Vector dots = protos.matrix() * f;
  Vector out(protos.num_classes());
  for (int k = 0; k < protos.num_classes(); ++k) {
    if (!protos.present(k)) {
      out[k] = 0.0;
      continue;
    }
    const double nk = protos.row(k).norm();
    if (nk == 0.0) throw Error("degenerate vector");
    out[k] = dots[k] / (nf * nk);
  }
  return out;
}

Vector MaskedSoftmax(const Vector& logits, const std::vector<bool>& present,
                     double tau) {
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (present[k]) max_scaled = std::max(max_scaled, logits[k] / tau);
  }
  Vector probs = Vector::Zero(logits.size());
  double total = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (!present[k]) continue;
    probs[k] = std::exp(logits[k] / tau - max_scaled);
    total += probs[k];
  }
  return probs / total;
}

ClipOutput ClipLogitsAndSoftmax(const Vector& f, const PrototypeSet& protos,
                                double tau) {
  if (protos.num_present() < 2) {
    throw Error("softmax needs at least two present classes");
  }
  if (!(tau > 0.0)) throw Error("temperature must be positive");
  ClipOutput out;
  out.logits = CosineToRows(f, protos);
  out.probs = MaskedSoftmax(out.logits, protos.present_flags(), tau);
  return out;
}

int ArgmaxPresent(const Vector& values, const std::vector<bool>& present) {
  int best = -1;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (!present[k]) continue;
    if (best < 0 || values[k] > values[best]) best = static_cast<int>(k);
  }
  return best;
}

const char* TierName(Tier tier) {
  switch (tier) {
    case Tier::kConfident:
      return "confident";
    case Tier::kTrustworthy:
      return "trustworthy";
    case Tier::kSkipped:
      return "skipped";
  }
  return "unknown";
}

namespace {

void Require(bool condition, const std::string& what) {
  if (!condition) throw Error("invalid config: " + what);
}

bool InOpenUnit(double x) { return x > 0.0 && x < 1.0; }

}  // namespace

void Validate(const EngineConfig& c) {
  Require(c.tau_clip > 0.0, "tau_clip must be positive");
  Require(InOpenUnit(c.theta_a_pct), "theta_a_pct must be in (0,1)");
  Require(InOpenUnit(c.theta_b_pct), "theta_b_pct must be in (0,1)");
  Require(c.theta_a_pct < c.theta_b_pct,
          "theta_a_pct must be below theta_b_pct");
  Require(c.window_c > 0, "window_c must be positive");
  Require(c.window_g > 0, "window_g must be positive");
  Require(c.gmm_activation > 0, "gmm_activation must be positive");
  Require(InOpenUnit(c.theta_p), "theta_p must be in (0,1)");
  Require(std::isfinite(c.theta_c_init), "theta_c_init must be finite");
  Require(c.theta_q_init > 0.0, "theta_q_init must be positive");
  Require(InOpenUnit(c.gamma), "gamma must be in (0,1)");
  Require(c.cache_size > 0, "cache_size must be positive");
  Require(c.tau_sim > 0.0 && c.tau_sim <= 1.0, "tau_sim must be in (0,1]");
  Require(c.lr_text > 0.0, "lr_text must be positive");
  Require(c.lr_vis > 0.0, "lr_vis must be positive");
  Require(c.lambda_align >= 0.0, "lambda_align must be non-negative");
  Require(c.lambda_au >= 0.0, "lambda_au must be non-negative");
  Require(c.aff_scale >= 0.0, "aff_scale must be non-negative");
  Require(c.aff_decay >= 0.0, "aff_decay must be non-negative");
  Require(c.tau_nce > 0.0, "tau_nce must be positive");
  Require(!c.evidence_scale || *c.evidence_scale > 0.0,
          "evidence_scale must be positive");
  Require(c.gmm_refit_interval > 0, "gmm_refit_interval must be positive");
  Require(c.flush_interval > 0, "flush_interval must be positive");
  Require(c.gmm_tol > 0.0, "gmm_tol must be positive");
  Require(c.gmm_max_iter > 0, "gmm_max_iter must be positive");
}

}  // namespace opentta

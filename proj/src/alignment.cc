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

#include "opentta/alignment.h"

#include <algorithm>
#include <cmath>

namespace opentta {

namespace {

constexpr double kNegligible = 1e-20;
// Widest logit range one exp() shift can cover without underflow.
constexpr double kSharedShiftRange = 600.0;

}  // namespace

AlignmentTracker::AlignmentTracker(int num_classes, int dim,
                                   const EngineConfig& config)
    : config_(config),
      num_classes_(num_classes),
      dim_(dim),
      shift_(1.0 / config.tau_nce),
      t_unit_(Matrix::Zero(num_classes, dim)),
      v_unit_(Matrix::Zero(num_classes, dim)),
      t_norm_(Vector::Zero(num_classes)),
      v_norm_(Vector::Zero(num_classes)),
      present_(num_classes, false),
      logits_(Matrix::Zero(num_classes, num_classes)),
      exp_(Matrix::Zero(num_classes, num_classes)),
      row_sum_(Vector::Zero(num_classes)),
      col_sum_(Vector::Zero(num_classes)),
      weights_(Matrix::Zero(num_classes, num_classes)),
      grad_t_(Matrix::Zero(num_classes, dim)),
      grad_v_(Matrix::Zero(num_classes, dim)),
      acc_(dim) {}

// Cosines lie in [-1, 1], so logits lie within shift_ of zero.
bool AlignmentTracker::Incremental() const {
  return 2.0 * shift_ <= kSharedShiftRange;
}

void AlignmentTracker::Reset(const PrototypeSet& text,
                             const PrototypeSet& visual) {
  if (text.num_classes() != num_classes_ || text.dim() != dim_ ||
      visual.num_classes() != num_classes_ || visual.dim() != dim_) {
    throw Error("alignment tracker shape mismatch");
  }
  for (int k = 0; k < num_classes_; ++k) {
    if (!text.present(k)) throw Error("text prototype missing for class");
    t_norm_[k] = text.row(k).norm();
    if (t_norm_[k] == 0.0) throw Error("degenerate vector");
    t_unit_.row(k) = text.row(k) / t_norm_[k];
    present_[k] = visual.present(k);
    if (present_[k]) {
      v_norm_[k] = visual.row(k).norm();
      if (v_norm_[k] == 0.0) throw Error("degenerate vector");
      v_unit_.row(k) = visual.row(k) / v_norm_[k];
    } else {
      v_norm_[k] = 0.0;
      v_unit_.row(k).setZero();
    }
  }
  Rebuild();
}

void AlignmentTracker::SetVisual(int k,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (k < 0 || k >= num_classes_ || row.size() != dim_) {
    throw Error("alignment tracker row out of range");
  }
  const double norm = row.norm();
  if (norm == 0.0) throw Error("degenerate vector");
  v_unit_.row(k) = row / norm;
  v_norm_[k] = norm;
  if (!present_[k] || !Incremental()) {
    present_[k] = true;
    Rebuild();
    return;
  }
  changed_t_.clear();
  changed_v_.clear();
  if (config_.lambda_align == 0.0 || idx_.size() < 2) {
    changed_v_.push_back(k);
    return;
  }

  const Eigen::RowVectorXd old_k = weights_.row(k);
  const Vector old_cols = col_sum_;
  LogitRow(k);
  ExpRow(k);
  ColumnSums();

  // Row k reads new exp values; other rows only new column sums.
  const double half_inv_n = 0.5 / static_cast<double>(idx_.size());
  std::vector<bool> dirty_v(num_classes_, false);
  std::vector<bool> dirty_t(num_classes_, false);
  dirty_v[k] = true;
  for (int j : idx_) {
    if (Kept(old_k[j], k, j)) dirty_t[j] = true;
  }
  for (int j : idx_) {
    const bool col_changed = col_sum_[j] != old_cols[j];
    for (int i : idx_) {
      if (i != k && !col_changed) continue;
      const double e = exp_(i, j);
      const double w = (e / row_sum_[i] + e / col_sum_[j] - (i == j ? 2.0 : 0.0)) *
                       half_inv_n;
      const double before = weights_(i, j);
      if (w == before) continue;
      weights_(i, j) = w;
      if (Kept(w, i, j) || Kept(before, i, j)) {
        dirty_v[i] = true;
        dirty_t[j] = true;
      }
    }
  }
  for (int j : idx_) {
    if (Kept(weights_(k, j), k, j)) dirty_t[j] = true;
  }
  for (int c : idx_) {
    if (dirty_t[c]) {
      TextRow(c);
      changed_t_.push_back(c);
    }
    if (dirty_v[c]) {
      VisualRow(c);
      changed_v_.push_back(c);
    }
  }
}

void AlignmentTracker::Rebuild() {
  idx_.clear();
  for (int k = 0; k < num_classes_; ++k) {
    if (present_[k]) idx_.push_back(k);
  }
  changed_t_.resize(num_classes_);
  changed_v_.resize(num_classes_);
  for (int k = 0; k < num_classes_; ++k) changed_t_[k] = changed_v_[k] = k;
  grad_t_.setZero();
  grad_v_.setZero();
  weights_.setZero();
  if (config_.lambda_align == 0.0 || idx_.size() < 2) return;

  for (int k : idx_) LogitRow(k);
  if (Incremental()) {
    exp_.setZero();
    for (int k : idx_) ExpRow(k);
    ColumnSums();
    Weights(&weights_);
  } else {
    // Separate row and column shifts.
    const double half_inv_n = 0.5 / static_cast<double>(idx_.size());
    Vector row_max = Vector::Constant(num_classes_, -INFINITY);
    Vector col_max = Vector::Constant(num_classes_, -INFINITY);
    for (int i : idx_) {
      for (int j : idx_) {
        row_max[i] = std::max(row_max[i], logits_(i, j));
        col_max[j] = std::max(col_max[j], logits_(i, j));
      }
    }
    Vector rs = Vector::Zero(num_classes_);
    Vector cs = Vector::Zero(num_classes_);
    for (int i : idx_) {
      for (int j : idx_) {
        rs[i] += std::exp(logits_(i, j) - row_max[i]);
        cs[j] += std::exp(logits_(i, j) - col_max[j]);
      }
    }
    for (int i : idx_) {
      for (int j : idx_) {
        const double p = std::exp(logits_(i, j) - row_max[i]) / rs[i];
        const double q = std::exp(logits_(i, j) - col_max[j]) / cs[j];
        weights_(i, j) = (p + q - (i == j ? 2.0 : 0.0)) * half_inv_n;
      }
    }
  }
  for (int c : idx_) {
    TextRow(c);
    VisualRow(c);
  }
}

void AlignmentTracker::LogitRow(int k) {
  logits_.row(k).noalias() = v_unit_.row(k) * t_unit_.transpose();
  logits_.row(k) /= config_.tau_nce;
}

void AlignmentTracker::ExpRow(int k) {
  double sum = 0.0;
  for (int j : idx_) {
    exp_(k, j) = std::exp(logits_(k, j) - shift_);
    sum += exp_(k, j);
  }
  row_sum_[k] = sum;
}

void AlignmentTracker::ColumnSums() {
  col_sum_.setZero();
  for (int i : idx_) {
    for (int j : idx_) col_sum_[j] += exp_(i, j);
  }
}

void AlignmentTracker::Weights(Matrix* out) const {
  const double half_inv_n = 0.5 / static_cast<double>(idx_.size());
  for (int i : idx_) {
    for (int j : idx_) {
      const double e = exp_(i, j);
      (*out)(i, j) =
          (e / row_sum_[i] + e / col_sum_[j] - (i == j ? 2.0 : 0.0)) * half_inv_n;
    }
  }
}

bool AlignmentTracker::Kept(double w, int i, int j) const {
  if (w == 0.0) return false;
  return i == j ||
         std::abs(w) >= kNegligible / static_cast<double>(idx_.size());
}

// (w - (w.x)x) / |x| pulls a gradient on the unit row x back to the raw row.
void AlignmentTracker::TextRow(int j) {
  acc_.setZero();
  for (int i : idx_) {
    const double w = weights_(i, j);
    if (Kept(w, i, j)) acc_ += w * v_unit_.row(i);
  }
  const double scale = config_.lambda_align / config_.tau_nce / t_norm_[j];
  grad_t_.row(j) = (acc_ - acc_.dot(t_unit_.row(j)) * t_unit_.row(j)) * scale;
}

void AlignmentTracker::VisualRow(int i) {
  acc_.setZero();
  for (int j : idx_) {
    const double w = weights_(i, j);
    if (Kept(w, i, j)) acc_ += w * t_unit_.row(j);
  }
  const double scale = config_.lambda_align / config_.tau_nce / v_norm_[i];
  grad_v_.row(i) = (acc_ - acc_.dot(v_unit_.row(i)) * v_unit_.row(i)) * scale;
}

}  // namespace opentta

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

// The alignment gradient at zero residuals, kept current while visual
// prototypes change one class at a time.
//
// Same quantity as AlignmentGradient(text, visual, zero residuals), up to
// rounding. Off-diagonal softmax weights below 1e-20 / n are dropped. When
// one visual row changes, only the rows of either gradient that read a
// changed softmax weight, or the changed row itself, are rebuilt. The result
// is bitwise identical to a Reset() on the same prototypes.

#ifndef OPENTTA_ALIGNMENT_H_
#define OPENTTA_ALIGNMENT_H_

#include <vector>

#include "opentta/core.h"

namespace opentta {

class AlignmentTracker {
 public:
  AlignmentTracker(int num_classes, int dim, const EngineConfig& config);

  // Full rebuild. `text` must be fully present.
  void Reset(const PrototypeSet& text, const PrototypeSet& visual);
  // Visual row k now equals `row` (and is present).
  void SetVisual(int k, const Eigen::Ref<const Eigen::RowVectorXd>& row);

  // K x d, zero rows for absent visual classes.
  const Matrix& text_gradient() const { return grad_t_; }
  const Matrix& visual_gradient() const { return grad_v_; }

  // Rows rebuilt by the last call, ascending. After Reset(): every class.
  const std::vector<int>& changed_text_rows() const { return changed_t_; }
  const std::vector<int>& changed_visual_rows() const { return changed_v_; }

  int num_present() const { return static_cast<int>(idx_.size()); }

 private:
  bool Incremental() const;
  void Rebuild();
  void LogitRow(int k);
  void ExpRow(int k);
  void ColumnSums();
  void Weights(Matrix* out) const;
  bool Kept(double w, int i, int j) const;
  void TextRow(int j);
  void VisualRow(int i);

  EngineConfig config_;
  int num_classes_;
  int dim_;
  double shift_;
  Matrix t_unit_, v_unit_;
  Vector t_norm_, v_norm_;
  std::vector<bool> present_;
  std::vector<int> idx_;
  Matrix logits_;  // v_i . t_j / tau_nce on present pairs
  Matrix exp_;     // exp(logits - shift) on present pairs (shared shift)
  Vector row_sum_, col_sum_;
  Matrix weights_;  // dInfoNCE / dlogits on present pairs, else 0
  Matrix grad_t_, grad_v_;
  std::vector<int> changed_t_, changed_v_;
  Eigen::RowVectorXd acc_;
};

}  // namespace opentta

#endif  // OPENTTA_ALIGNMENT_H_

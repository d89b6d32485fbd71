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

// Shared vector math, prototype containers, engine configuration and the
// per-sample verdict record.
//
// Embeddings are held as 64-bit Eigen vectors; prototype sets are row-major
// K x d matrices with a per-row presence flag (visual prototypes of classes
// with an empty cache queue are absent).

#ifndef OPENTTA_CORE_H_
#define OPENTTA_CORE_H_

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace opentta {

using Vector = Eigen::VectorXd;
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Raised on contract violations (bad dimensions, degenerate vectors, invalid
// configuration). IO parse failures use the more specific ParseError.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws if `v` is empty or holds a NaN/Inf.
void CheckEmbedding(const Vector& v);

// a.b / (|a||b|). Throws Error("degenerate vector") on a zero-norm input and
// on a dimension mismatch.
double Cosine(const Vector& a, const Vector& b);

// Returns v / |v|. Throws on the zero vector.
Vector L2Normalize(const Vector& v);

// A K x d matrix of class prototypes with per-class presence flags.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  // All rows present.
  explicit PrototypeSet(Matrix rows);
  PrototypeSet(Matrix rows, std::vector<bool> present);

  int num_classes() const { return static_cast<int>(rows_.rows()); }
  int dim() const { return static_cast<int>(rows_.cols()); }
  int num_present() const;
  bool present(int k) const { return present_[k]; }
  const std::vector<bool>& present_flags() const { return present_; }
  void set_present(int k, bool value) { present_[k] = value; }

  const Matrix& matrix() const { return rows_; }
  Matrix& mutable_matrix() { return rows_; }
  auto row(int k) const { return rows_.row(k); }

  const std::vector<std::string>& class_names() const { return names_; }
  void set_class_names(std::vector<std::string> names);

  // Row-wise l2 normalization of the present rows. Absent rows are zeroed.
  PrototypeSet Normalized() const;

 private:
  Matrix rows_;
  std::vector<bool> present_;
  std::vector<std::string> names_;
};

// Cosine similarity of `f` against every row; absent rows get 0. Callers
// consult present() before using an entry.
Vector CosineToRows(const Vector& f, const PrototypeSet& protos);

// Softmax over the present entries of `logits` / tau; absent entries get
// probability 0.
Vector MaskedSoftmax(const Vector& logits, const std::vector<bool>& present,
                     double tau);

struct ClipOutput {
  Vector logits;  // cosine similarities
  Vector probs;
};

// Frozen-backbone classification: cosine logits and their temperature
// softmax over the present classes. Requires at least two present classes.
ClipOutput ClipLogitsAndSoftmax(const Vector& f, const PrototypeSet& protos,
                                double tau);

// Index of the largest present entry, lowest index on ties. -1 if none.
int ArgmaxPresent(const Vector& values, const std::vector<bool>& present);

enum class Tier { kConfident = 0, kTrustworthy = 1, kSkipped = 2 };

const char* TierName(Tier tier);

enum class Optimizer { kGradientDescent, kAdamFirstStep };
enum class VerifierMode { kGmm, kThresholdOnly };

struct EngineConfig {
  double tau_clip = 0.01;
  double theta_a_pct = 0.3;
  double theta_b_pct = 0.6;
  int window_c = 100;
  int window_g = 100;
  int gmm_activation = 100;
  double theta_p = 0.5;
  double theta_c_init = 0.7;
  double theta_q_init = 0.1;
  double gamma = 0.01;
  int cache_size = 5;
  double tau_sim = 0.9;
  double lr_text = 2.5e-4;
  double lr_vis = 7.5e-3;
  double lambda_align = 0.2;
  double lambda_au = 1.0;
  double aff_scale = 0.5;
  double aff_decay = 9.5;
  double tau_nce = 0.01;
  // Unset means 1 / tau_clip.
  std::optional<double> evidence_scale;
  int gmm_refit_interval = 1;
  int flush_interval = 100;
  long long seed = 0;

  Optimizer optimizer = Optimizer::kGradientDescent;
  VerifierMode verifier = VerifierMode::kGmm;
  double gmm_tol = 1e-6;
  int gmm_max_iter = 100;
  bool gmm_warm_start = false;
  // A confident sample enters the cache before verification; when the
  // verifier then flags it, the admission is undone.
  bool revert_flagged_admission = true;

  double EvidenceScale() const {
    return evidence_scale ? *evidence_scale : 1.0 / tau_clip;
  }
};

// Throws Error naming the first violated invariant.
void Validate(const EngineConfig& config);

struct SampleVerdict {
  int predicted_class = -1;
  double s_open_init = 0.0;
  double s_open_final = 0.0;
  double p_ood = 0.0;
  Tier tier = Tier::kSkipped;
  bool is_ood = false;
  double au = 0.0;
  double eu = 1.0;
  bool accepted_for_evolution = false;
};

}  // namespace opentta

#endif  // OPENTTA_CORE_H_

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

#include "opentta/evidential.h"

#include <cmath>
#include <string>
#include <vector>

namespace opentta {

namespace {

constexpr double kRecurrenceFloor = 10.0;
constexpr double kAdamEpsilon = 1e-8;

void CheckAlpha(const Vector& alpha) {
  if (alpha.size() == 0) throw Error("empty evidence vector");
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    if (!(alpha[k] >= 1.0)) {
      throw Error("evidence alpha_" + std::to_string(k) + " below 1");
    }
  }
}

std::vector<int> PresentIndices(const PrototypeSet& visual,
                                const PrototypeSet& text) {
  if (visual.num_classes() != text.num_classes()) {
    throw Error("class count mismatch between visual and text prototypes");
  }
  if (visual.dim() != text.dim()) {
    throw Error("dimension mismatch between visual and text prototypes");
  }
  std::vector<int> idx;
  for (int k = 0; k < visual.num_classes(); ++k) {
    if (!visual.present(k)) continue;
    if (!text.present(k)) throw Error("text prototype missing for class");
    idx.push_back(k);
  }
  return idx;
}

// Rows of (base + residual) for the given classes, with their norms.
Matrix GatherShifted(const Matrix& base, const Matrix* residual,
                     const std::vector<int>& idx, Vector* norms) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), base.cols());
  norms->resize(out.rows());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = base.row(idx[i]);
    if (residual != nullptr) out.row(i) += residual->row(idx[i]);
    (*norms)[i] = out.row(i).norm();
    if ((*norms)[i] == 0.0) throw Error("degenerate vector");
    out.row(i) /= (*norms)[i];
  }
  return out;
}

constexpr double kNegligible = 1e-20;
// exp() of a logit range wider than this could underflow whole rows.
constexpr double kSharedShiftRange = 600.0;

// Row and column log-sum-exp of `logits` plus the two softmax matrices.
struct SoftmaxPair {
  Vector row_lse;
  Eigen::RowVectorXd col_lse;
  Matrix rows;  // exp(l_ij - row_lse_i)
  Matrix cols;  // exp(l_ij - col_lse_j)
};

void Softmaxes(const Matrix& logits, bool want_matrices, SoftmaxPair* out) {
  const double hi = logits.maxCoeff();
  if (hi - logits.minCoeff() <= kSharedShiftRange) {
    // One shift for every entry, so a single exp pass serves both directions.
    Matrix e = logits.array() - hi;
    e = e.array().exp();
    const Vector rs = e.rowwise().sum();
    const Eigen::RowVectorXd cs = e.colwise().sum();
    out->row_lse = hi + rs.array().log();
    out->col_lse = hi + cs.array().log();
    if (want_matrices) {
      out->rows = e.array().colwise() / rs.array();
      out->cols = e.array().rowwise() / cs.array();
    }
    return;
  }
  const auto a = logits.array();
  const Vector rmax = logits.rowwise().maxCoeff();
  const Eigen::RowVectorXd cmax = logits.colwise().maxCoeff();
  Matrix er = a.colwise() - rmax.array();
  er = er.array().exp();
  Matrix ec = a.rowwise() - cmax.array();
  ec = ec.array().exp();
  const Vector rs = er.rowwise().sum();
  const Eigen::RowVectorXd cs = ec.colwise().sum();
  out->row_lse = rmax.array() + rs.array().log();
  out->col_lse = cmax.array() + cs.array().log();
  if (want_matrices) {
    out->rows = er.array().colwise() / rs.array();
    out->cols = ec.array().rowwise() / cs.array();
  }
}

// v, t: n x d unit rows; logits = v t^T / tau. Symmetric cross-entropy with
// diagonal targets. Gradients with respect to the unit rows go to grad_v and
// grad_t when both are non-null.
double InfoNceCore(const Matrix& v, const Matrix& t, const Matrix& logits,
                   double tau, Matrix* grad_v, Matrix* grad_t) {
  const Eigen::Index n = v.rows();
  const bool want_grad = grad_v != nullptr && grad_t != nullptr;
  if (want_grad) {
    grad_v->setZero(n, v.cols());
    grad_t->setZero(n, t.cols());
  }
  if (n == 0) return 0.0;
  SoftmaxPair sm;
  Softmaxes(logits, want_grad, &sm);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double loss = 0.5 * inv_n *
                      (sm.row_lse.sum() + sm.col_lse.sum() -
                       2.0 * logits.diagonal().sum());
  if (!want_grad) return loss;

  // dL/dlogits = (softmax_row + softmax_col - 2I) / (2n).
  Matrix& g = sm.rows;
  g += sm.cols;
  g.diagonal().array() -= 2.0;
  g *= 0.5 * inv_n;

  // Softmax entries below kNegligible cannot move a double result next to the
  // row and column maxima (at least 1/n), so they are skipped when sparse.
  const double cutoff = kNegligible * inv_n;
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || std::abs(g(i, j)) >= cutoff) ++kept;
    }
  }
  if (kept * 4 > n * n) {
    grad_v->noalias() = g * t;
    grad_t->noalias() = g.transpose() * v;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double w = g(i, j);
        if (i != j && std::abs(w) < cutoff) continue;
        grad_v->row(i) += w * t.row(j);
        grad_t->row(j) += w * v.row(i);
      }
    }
  }
  *grad_v /= tau;
  *grad_t /= tau;
  return loss;
}

// Pulls a gradient on a unit row x' back through Norm(): (w - (w.x')x') / r.
void ProjectRow(Eigen::Ref<Eigen::RowVectorXd> grad,
                const Eigen::Ref<const Eigen::RowVectorXd>& unit, double norm) {
  grad = (grad - grad.dot(unit) * unit) / norm;
}

// Alignment gradient over n present classes given their unit rows (n x d),
// the norms before normalization and logits = v t^T / tau_nce. Outputs are
// gradients with respect to the unnormalized rows.
void AlignmentRowGradients(const Matrix& v_unit, const Matrix& t_unit,
                           const Vector& v_norms, const Vector& t_norms,
                           const Matrix& logits, const EngineConfig& config,
                           Matrix* grad_v, Matrix* grad_t) {
  const Eigen::Index n = v_unit.rows();
  // A single pair has zero loss everywhere.
  if (config.lambda_align == 0.0 || n < 2) {
    grad_v->setZero(n, v_unit.cols());
    grad_t->setZero(n, t_unit.cols());
    return;
  }
  InfoNceCore(v_unit, t_unit, logits, config.tau_nce, grad_v, grad_t);
  for (Eigen::Index i = 0; i < n; ++i) {
    ProjectRow(grad_v->row(i), v_unit.row(i), v_norms[i]);
    ProjectRow(grad_t->row(i), t_unit.row(i), t_norms[i]);
  }
  *grad_v *= config.lambda_align;
  *grad_t *= config.lambda_align;
}

}  // namespace

double Digamma(double x) {
  if (!(x > 0.0)) throw Error("digamma requires x > 0");
  double result = 0.0;
  while (x < kRecurrenceFloor) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli tail: 1/12, 1/120, 1/252, 1/240, 1/132, 691/32760, 1/12.
  const double tail =
      inv2 *
      (1.0 / 12 -
       inv2 * (1.0 / 120 -
               inv2 * (1.0 / 252 -
                       inv2 * (1.0 / 240 -
                               inv2 * (1.0 / 132 -
                                       inv2 * (691.0 / 32760 -
                                               inv2 * (1.0 / 12)))))));
  return result + std::log(x) - 0.5 * inv - tail;
}

double Trigamma(double x) {
  if (!(x > 0.0)) throw Error("trigamma requires x > 0");
  double result = 0.0;
  while (x < kRecurrenceFloor) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv + 0.5 * inv2 +
      inv * inv2 *
          (1.0 / 6 -
           inv2 * (1.0 / 30 -
                   inv2 * (1.0 / 42 -
                           inv2 * (1.0 / 30 -
                                   inv2 * (5.0 / 66 -
                                           inv2 * (691.0 / 2730 -
                                                   inv2 * (7.0 / 6)))))));
  return result + series;
}

Vector Evidence(const Vector& z, double scale) {
  return (z * scale).cwiseMax(0.0).array() + 1.0;
}

double Aleatoric(const Vector& alpha) {
  CheckAlpha(alpha);
  const double s = alpha.sum();
  double weighted = 0.0;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    weighted += alpha[k] / s * Digamma(alpha[k] + 1.0);
  }
  // sum_k alpha_k / S == 1, so the psi(S+1) term factors out.
  return std::max(0.0, Digamma(s + 1.0) - weighted);
}

double Epistemic(const Vector& alpha) {
  CheckAlpha(alpha);
  return static_cast<double>(alpha.size()) / alpha.sum();
}

Vector AleatoricGradient(const Vector& alpha) {
  CheckAlpha(alpha);
  const double s = alpha.sum();
  const Eigen::Index k_count = alpha.size();
  Vector psi(k_count);
  double mean_psi = 0.0;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    psi[k] = Digamma(alpha[k] + 1.0);
    mean_psi += alpha[k] / s * psi[k];
  }
  const double tri_s = Trigamma(s + 1.0);
  Vector grad(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    grad[k] = tri_s - (psi[k] - mean_psi) / s -
              alpha[k] / s * Trigamma(alpha[k] + 1.0);
  }
  return grad;
}

Vector EpistemicGradient(const Vector& alpha) {
  CheckAlpha(alpha);
  const double s = alpha.sum();
  return Vector::Constant(alpha.size(),
                          -static_cast<double>(alpha.size()) / (s * s));
}

double InfoNce(const PrototypeSet& visual, const PrototypeSet& text,
               double tau) {
  const std::vector<int> idx = PresentIndices(visual, text);
  if (idx.empty()) return 0.0;
  Vector nv, nt;
  const Matrix v = GatherShifted(visual.matrix(), nullptr, idx, &nv);
  const Matrix t = GatherShifted(text.matrix(), nullptr, idx, &nt);
  return InfoNceCore(v, t, (v * t.transpose()) / tau, tau, nullptr, nullptr);
}

LossTerms EvaluateLoss(const Vector& f, const PrototypeSet& text_tmp,
                       const PrototypeSet& visual_tmp,
                       const EngineConfig& config) {
  if (text_tmp.num_present() != text_tmp.num_classes()) {
    throw Error("text prototypes must be fully present");
  }
  const Vector alpha =
      Evidence(CosineToRows(f, text_tmp), config.EvidenceScale());
  LossTerms terms;
  terms.au = Aleatoric(alpha);
  terms.eu = Epistemic(alpha);
  terms.align = config.lambda_align > 0.0
                    ? InfoNce(visual_tmp, text_tmp, config.tau_nce)
                    : 0.0;
  terms.total =
      config.lambda_au * terms.au + terms.eu + config.lambda_align * terms.align;
  return terms;
}

TemporaryPrototypes ApplyResiduals(const PrototypeSet& text,
                                   const PrototypeSet& visual,
                                   const Residuals& residuals) {
  TemporaryPrototypes out{text, visual};
  out.text.mutable_matrix() += residuals.text;
  out.text = out.text.Normalized();
  for (int k = 0; k < visual.num_classes(); ++k) {
    if (visual.present(k)) {
      out.vis.mutable_matrix().row(k) += residuals.vis.row(k);
    }
  }
  out.vis = out.vis.Normalized();
  return out;
}

Matrix UncertaintyGradient(const Vector& f, const PrototypeSet& text,
                           const Matrix& text_residual,
                           const EngineConfig& config) {
  const int num_classes = text.num_classes();
  const double scale = config.EvidenceScale();
  const Vector u = L2Normalize(f);
  if (u.size() != text.dim()) throw Error("dimension mismatch");

  Matrix shifted = text.matrix() + text_residual;
  Vector norms(num_classes);
  for (int k = 0; k < num_classes; ++k) {
    norms[k] = shifted.row(k).norm();
    if (norms[k] == 0.0) throw Error("degenerate vector");
    shifted.row(k) /= norms[k];
  }
  const Vector z = shifted * u;
  const Vector alpha = Evidence(z, scale);
  const Vector dl_dalpha =
      config.lambda_au * AleatoricGradient(alpha) + EpistemicGradient(alpha);

  Matrix grad = Matrix::Zero(num_classes, text.dim());
  for (int k = 0; k < num_classes; ++k) {
    // ReLU is dead at and below zero.
    if (!(z[k] * scale > 0.0)) continue;
    const double coef = dl_dalpha[k] * scale / norms[k];
    grad.row(k) = coef * (u.transpose() - z[k] * shifted.row(k));
  }
  return grad;
}

Gradients AlignmentGradient(const PrototypeSet& text,
                            const PrototypeSet& visual,
                            const Residuals& residuals,
                            const EngineConfig& config) {
  const std::vector<int> idx = PresentIndices(visual, text);
  Gradients out{Matrix::Zero(text.num_classes(), text.dim()),
                Matrix::Zero(visual.num_classes(), visual.dim())};
  Vector nv, nt;
  const Matrix v = GatherShifted(visual.matrix(), &residuals.vis, idx, &nv);
  const Matrix t = GatherShifted(text.matrix(), &residuals.text, idx, &nt);
  Matrix gv, gt;
  AlignmentRowGradients(v, t, nv, nt, (v * t.transpose()) / config.tau_nce,
                        config, &gv, &gt);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.vis.row(idx[i]) = gv.row(static_cast<Eigen::Index>(i));
    out.text.row(idx[i]) = gt.row(static_cast<Eigen::Index>(i));
  }
  return out;
}

Gradients LossGradients(const Vector& f, const PrototypeSet& text,
                        const PrototypeSet& visual, const Residuals& residuals,
                        const EngineConfig& config) {
  Gradients out = AlignmentGradient(text, visual, residuals, config);
  out.text += UncertaintyGradient(f, text, residuals.text, config);
  return out;
}

Residuals StepFromZero(const Gradients& g, const EngineConfig& config) {
  Residuals step;
  switch (config.optimizer) {
    case Optimizer::kGradientDescent:
      step.text = -config.lr_text * g.text;
      step.vis = -config.lr_vis * g.vis;
      break;
    case Optimizer::kAdamFirstStep:
      step.text = -config.lr_text *
                  g.text.cwiseQuotient(
                      (g.text.cwiseAbs().array() + kAdamEpsilon).matrix());
      step.vis = -config.lr_vis *
                 g.vis.cwiseQuotient(
                     (g.vis.cwiseAbs().array() + kAdamEpsilon).matrix());
      break;
  }
  return step;
}

TemporaryPrototypes AdaptStep(const Vector& f, const PrototypeSet& text,
                              const PrototypeSet& visual, Tier tier,
                              const EngineConfig& config,
                              const Gradients* alignment) {
  if (tier == Tier::kSkipped) {
    return {text.Normalized(), visual.Normalized()};
  }
  const Residuals zero = Residuals::Zero(text.num_classes(), text.dim());
  Gradients g = alignment != nullptr
                    ? *alignment
                    : AlignmentGradient(text, visual, zero, config);
  g.text += UncertaintyGradient(f, text, zero.text, config);
  return ApplyResiduals(text, visual, StepFromZero(g, config));
}

}  // namespace opentta

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

// Evidence-driven temporary prototypes.
//
// For a sample f and residuals (dT, dV) the temporary prototypes are
//
//   T' = Norm(P_t + dT),   V' = Norm(P_v + dV)       (row-wise)
//
// and the objective is
//
//   L = lambda_au * AU(alpha) + EU(alpha) + lambda_align * InfoNCE(V', T')
//
// where alpha = ReLU(scale * cos(f, T')) + 1 is Dirichlet evidence,
// AU = -sum_k (a_k/S)(digamma(a_k+1) - digamma(S+1)) is the expected
// categorical entropy and EU = K/S. InfoNCE is the symmetric (row and column)
// cross-entropy of the present-class similarity matrix V' T'^T / tau_nce with
// diagonal targets. Gradients are exact, including the Jacobian of the
// row normalization: d Norm(x) / dx = (I - x' x'^T) / |x|.

#ifndef OPENTTA_EVIDENTIAL_H_
#define OPENTTA_EVIDENTIAL_H_

#include "opentta/core.h"

namespace opentta {

// psi(x) for x > 0: upward recurrence to x >= 10, then the asymptotic series.
double Digamma(double x);
// psi'(x) for x > 0, same scheme.
double Trigamma(double x);

// alpha_k = max(0, z_k * scale) + 1.
Vector Evidence(const Vector& z, double scale);

// Expected entropy of Cat(p), p ~ Dir(alpha). Requires alpha_k >= 1.
double Aleatoric(const Vector& alpha);
// K / sum(alpha). Requires alpha_k >= 1.
double Epistemic(const Vector& alpha);

// dAU/dalpha and dEU/dalpha.
Vector AleatoricGradient(const Vector& alpha);
Vector EpistemicGradient(const Vector& alpha);

// Symmetric InfoNCE over the classes present in `visual`. Returns 0 when no
// class is present. Throws on mismatched class counts.
double InfoNce(const PrototypeSet& visual, const PrototypeSet& text,
               double tau);

struct LossTerms {
  double au = 0.0;
  double eu = 0.0;
  double align = 0.0;
  double total = 0.0;
};

// Loss terms at given temporary prototypes. `text_tmp` must be fully present.
LossTerms EvaluateLoss(const Vector& f, const PrototypeSet& text_tmp,
                       const PrototypeSet& visual_tmp,
                       const EngineConfig& config);

inline double TotalLoss(const Vector& f, const PrototypeSet& text_tmp,
                        const PrototypeSet& visual_tmp,
                        const EngineConfig& config) {
  return EvaluateLoss(f, text_tmp, visual_tmp, config).total;
}

// Residual matrices, zero on construction. Rows of `vis` for absent visual
// classes stay zero.
struct Residuals {
  Matrix text;
  Matrix vis;

  static Residuals Zero(int num_classes, int dim) {
    return {Matrix::Zero(num_classes, dim), Matrix::Zero(num_classes, dim)};
  }
};

struct Gradients {
  Matrix text;
  Matrix vis;
};

struct TemporaryPrototypes {
  PrototypeSet text;
  PrototypeSet vis;
};

// Norm(P + residual) row-wise; absent visual rows stay absent.
TemporaryPrototypes ApplyResiduals(const PrototypeSet& text,
                                   const PrototypeSet& visual,
                                   const Residuals& residuals);

// Gradient of the uncertainty part (lambda_au * AU + EU) with respect to the
// text residual. The visual residual does not enter this term.
Matrix UncertaintyGradient(const Vector& f, const PrototypeSet& text,
                           const Matrix& text_residual,
                           const EngineConfig& config);

// Gradient of lambda_align * InfoNCE with respect to both residuals.
Gradients AlignmentGradient(const PrototypeSet& text,
                            const PrototypeSet& visual,
                            const Residuals& residuals,
                            const EngineConfig& config);

// Exact gradient of TotalLoss at Norm(P + residuals).
Gradients LossGradients(const Vector& f, const PrototypeSet& text,
                        const PrototypeSet& visual, const Residuals& residuals,
                        const EngineConfig& config);

// Residuals after one optimizer step from zero. With kAdamFirstStep the
// zero-initialized moments make the bias-corrected step -lr * g / (|g| + eps).
Residuals StepFromZero(const Gradients& gradients, const EngineConfig& config);

// One optimization step on a trustworthy sample; skipped samples get the
// normalized global prototypes back unchanged. Never mutates its inputs.
//
// `alignment` may carry AlignmentGradient(text, visual, zero residuals) when
// the caller has it cached; it depends on the prototypes only.
TemporaryPrototypes AdaptStep(const Vector& f, const PrototypeSet& text,
                              const PrototypeSet& visual, Tier tier,
                              const EngineConfig& config,
                              const Gradients* alignment = nullptr);

}  // namespace opentta

#endif  // OPENTTA_EVIDENTIAL_H_

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

// Final verification: a two-component 1-D Gaussian mixture over recent final
// openness scores. The component with the larger mean models csOOD.

#ifndef OPENTTA_VERIFIER_H_
#define OPENTTA_VERIFIER_H_

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "opentta/core.h"
#include "opentta/gating.h"

namespace opentta {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kCollapsedWeight = 1e-6;

struct GmmParams {
  std::array<double, 2> weights{0.5, 0.5};
  std::array<double, 2> means{0.0, 1.0};
  std::array<double, 2> variances{1.0, 1.0};

  int ood_component() const { return means[1] > means[0] ? 1 : 0; }
  bool Valid() const;
};

// 2-means from the extreme scores, Lloyd iterations to a fixed assignment.
// nullopt when fewer than two distinct values exist.
std::optional<GmmParams> KMeans2Init(std::span<const double> scores);

double LogLikelihood(const GmmParams& g, std::span<const double> scores);

struct EmResult {
  GmmParams params;
  bool ok = false;  // false on component collapse or non-finite parameters
  int iterations = 0;
  // Log-likelihood of the initial parameters followed by one entry per sweep.
  std::vector<double> log_likelihood;
};

EmResult EmFit(std::span<const double> scores, const GmmParams& init,
               double tol, int max_iter);

// P(ood component | s), evaluated in log space.
double PosteriorOod(const GmmParams& g, double s);

// Score between the two means where the posterior crosses 0.5 (bisection to
// 1e-6); the midpoint of the means when no crossing exists there.
double FallbackThreshold(const GmmParams& g);

struct VerifierDecision {
  double p_ood = 0.0;
  bool is_ood = false;
  bool used_gmm = false;
  bool refit = false;
};

// Activation gate, periodic refit and hard-threshold fallback.
class Verifier {
 public:
  explicit Verifier(const EngineConfig& config);

  // `window` must already contain `s_final`. Never sees labels.
  VerifierDecision Verify(long long n_proc, const ScoreWindow& window,
                          double s_final);

  double theta_c() const { return theta_c_; }
  const std::optional<GmmParams>& gmm() const { return gmm_; }
  bool gmm_valid() const { return gmm_valid_; }
  long long successful_fits() const { return successful_fits_; }
  long long failed_fits() const { return failed_fits_; }

 private:
  bool Refit(const ScoreWindow& window);

  EngineConfig config_;
  double theta_c_;
  std::optional<GmmParams> gmm_;
  bool gmm_valid_ = false;
  bool attempted_ = false;
  long long successful_fits_ = 0;
  long long failed_fits_ = 0;
};

}  // namespace opentta

#endif  // OPENTTA_VERIFIER_H_

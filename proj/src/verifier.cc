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

#include "opentta/verifier.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace opentta {

namespace {

constexpr int kMaxLloydIterations = 100;

double LogWeightedDensity(const GmmParams& g, int j, double s) {
  const double var = g.variances[j];
  const double d = s - g.means[j];
  return std::log(g.weights[j]) -
         0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
}

double LogSumExp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

bool GmmParams::Valid() const {
  double total = 0.0;
  for (int j = 0; j < 2; ++j) {
    if (!std::isfinite(weights[j]) || !std::isfinite(means[j]) ||
        !std::isfinite(variances[j])) {
      return false;
    }
    if (weights[j] < kCollapsedWeight || weights[j] >= 1.0) return false;
    if (variances[j] < kVarianceFloor) return false;
    total += weights[j];
  }
  return std::abs(total - 1.0) < 1e-9;
}

std::optional<GmmParams> KMeans2Init(std::span<const double> scores) {
  if (scores.size() < 2) return std::nullopt;
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  std::array<double, 2> centers{*lo_it, *hi_it};
  if (!(centers[0] < centers[1])) return std::nullopt;

  std::vector<int> assign(scores.size(), -1);
  for (int iter = 0; iter < kMaxLloydIterations; ++iter) {
    bool changed = false;
    std::array<double, 2> sum{0.0, 0.0};
    std::array<double, 2> count{0.0, 0.0};
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const int a = std::abs(scores[i] - centers[0]) <=
                            std::abs(scores[i] - centers[1])
                        ? 0
                        : 1;
      changed |= a != assign[i];
      assign[i] = a;
      sum[a] += scores[i];
      count[a] += 1.0;
    }
    // The extremes always stay with their own center, so neither cluster
    // empties.
    for (int j = 0; j < 2; ++j) centers[j] = sum[j] / count[j];
    if (!changed) break;
  }

  GmmParams g;
  std::array<double, 2> count{0.0, 0.0};
  std::array<double, 2> sq{0.0, 0.0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int a = assign[i];
    count[a] += 1.0;
    const double d = scores[i] - centers[a];
    sq[a] += d * d;
  }
  const double m = static_cast<double>(scores.size());
  for (int j = 0; j < 2; ++j) {
    g.weights[j] = count[j] / m;
    g.means[j] = centers[j];
    g.variances[j] = std::max(kVarianceFloor, sq[j] / count[j]);
  }
  return g;
}

double LogLikelihood(const GmmParams& g, std::span<const double> scores) {
  double ll = 0.0;
  for (double s : scores) {
    ll += LogSumExp(LogWeightedDensity(g, 0, s), LogWeightedDensity(g, 1, s));
  }
  return ll;
}

EmResult EmFit(std::span<const double> scores, const GmmParams& init,
               double tol, int max_iter) {
  EmResult result;
  result.params = init;
  if (scores.empty()) return result;
  const double m = static_cast<double>(scores.size());
  std::vector<double> resp(scores.size());  // responsibility of component 1

  double ll = LogLikelihood(init, scores);
  result.log_likelihood.push_back(ll);
  GmmParams g = init;
  for (int iter = 0; iter < max_iter; ++iter) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double l0 = LogWeightedDensity(g, 0, scores[i]);
      const double l1 = LogWeightedDensity(g, 1, scores[i]);
      resp[i] = 1.0 / (1.0 + std::exp(l0 - l1));
    }
    std::array<double, 2> mass{0.0, 0.0};
    std::array<double, 2> first{0.0, 0.0};
    for (std::size_t i = 0; i < scores.size(); ++i) {
      mass[0] += 1.0 - resp[i];
      mass[1] += resp[i];
      first[0] += (1.0 - resp[i]) * scores[i];
      first[1] += resp[i] * scores[i];
    }
    result.iterations = iter + 1;
    if (mass[0] / m < kCollapsedWeight || mass[1] / m < kCollapsedWeight) {
      result.params = g;
      result.ok = false;
      return result;
    }
    GmmParams next;
    for (int j = 0; j < 2; ++j) {
      next.weights[j] = mass[j] / m;
      next.means[j] = first[j] / mass[j];
    }
    std::array<double, 2> second{0.0, 0.0};
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double d0 = scores[i] - next.means[0];
      const double d1 = scores[i] - next.means[1];
      second[0] += (1.0 - resp[i]) * d0 * d0;
      second[1] += resp[i] * d1 * d1;
    }
    for (int j = 0; j < 2; ++j) {
      next.variances[j] = std::max(kVarianceFloor, second[j] / mass[j]);
    }
    g = next;
    const double next_ll = LogLikelihood(g, scores);
    result.log_likelihood.push_back(next_ll);
    if (!std::isfinite(next_ll)) break;
    const bool converged = std::abs(next_ll - ll) < tol;
    ll = next_ll;
    if (converged) break;
  }
  result.params = g;
  result.ok = g.Valid();
  return result;
}

double PosteriorOod(const GmmParams& g, double s) {
  const int ood = g.ood_component();
  const double l_ood = LogWeightedDensity(g, ood, s);
  const double l_id = LogWeightedDensity(g, 1 - ood, s);
  return 1.0 / (1.0 + std::exp(l_id - l_ood));
}

double FallbackThreshold(const GmmParams& g) {
  double lo = std::min(g.means[0], g.means[1]);
  double hi = std::max(g.means[0], g.means[1]);
  const double midpoint = 0.5 * (lo + hi);
  if (!(lo < hi)) return midpoint;
  if (!(PosteriorOod(g, lo) < 0.5 && PosteriorOod(g, hi) > 0.5)) {
    return midpoint;
  }
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (PosteriorOod(g, mid) < 0.5) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Verifier::Verifier(const EngineConfig& config)
    : config_(config), theta_c_(config.theta_c_init) {}

bool Verifier::Refit(const ScoreWindow& window) {
  const std::vector<double> scores = window.Values();
  std::optional<GmmParams> init;
  if (config_.gmm_warm_start && gmm_) {
    init = gmm_;
  } else {
    init = KMeans2Init(scores);
  }
  if (!init) return false;
  EmResult fit = EmFit(scores, *init, config_.gmm_tol, config_.gmm_max_iter);
  if (!fit.ok) return false;
  gmm_ = fit.params;
  theta_c_ = FallbackThreshold(fit.params);
  return true;
}

VerifierDecision Verifier::Verify(long long n_proc, const ScoreWindow& window,
                                  double s_final) {
  VerifierDecision d;
  const bool active = config_.verifier == VerifierMode::kGmm &&
                      n_proc >= config_.gmm_activation;
  if (active) {
    const long long since = n_proc - config_.gmm_activation;
    if (!attempted_ || since % config_.gmm_refit_interval == 0) {
      attempted_ = true;
      d.refit = true;
      gmm_valid_ = Refit(window);
      if (gmm_valid_) {
        ++successful_fits_;
      } else {
        ++failed_fits_;
      }
    }
  }
  if (active && gmm_valid_) {
    d.used_gmm = true;
    d.p_ood = PosteriorOod(*gmm_, s_final);
  } else {
    d.p_ood = s_final >= theta_c_ ? 1.0 : 0.0;
  }
  d.is_ood = d.p_ood > config_.theta_p;
  return d;
}

}  // namespace opentta

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

#include "opentta/evolution.h"

#include <cmath>
#include <utility>

namespace opentta {

Vector VisualAffinity(const Vector& f, const PrototypeSet& visual, double scale,
                      double decay) {
  Vector out = Vector::Zero(visual.num_classes());
  if (visual.num_present() == 0) return out;
  const Vector cosines = CosineToRows(f, visual);
  for (int k = 0; k < visual.num_classes(); ++k) {
    if (visual.present(k)) {
      out[k] = scale * std::exp(-decay * (1.0 - cosines[k]));
    }
  }
  return out;
}

Prediction DualSourcePredict(const Vector& f, const PrototypeSet& text_tmp,
                             const PrototypeSet& visual_tmp,
                             const EngineConfig& config) {
  if (text_tmp.num_present() != text_tmp.num_classes()) {
    throw Error("text prototypes must be fully present");
  }
  Prediction p;
  p.combined = ClipLogitsAndSoftmax(f, text_tmp, config.tau_clip).probs +
               VisualAffinity(f, visual_tmp, config.aff_scale,
                              config.aff_decay);
  p.predicted_class = ArgmaxPresent(p.combined, text_tmp.present_flags());
  return p;
}

PrototypeSet CmaUpdate(const PrototypeSet& text, const PrototypeSet& text_tmp,
                       long long n) {
  if (n < 1) throw Error("cumulative average needs n >= 1");
  if (text.num_classes() != text_tmp.num_classes() ||
      text.dim() != text_tmp.dim()) {
    throw Error("prototype shape mismatch in cumulative average");
  }
  const double w = 1.0 / static_cast<double>(n);
  PrototypeSet out = text;
  out.mutable_matrix() = (1.0 - w) * text.matrix() + w * text_tmp.matrix();
  return out;
}

QualityGate::QualityGate(double theta_q, double gamma)
    : theta_q_(theta_q), gamma_(gamma) {
  if (!(theta_q > 0.0)) throw Error("quality gate must start positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw Error("gate momentum in (0,1)");
}

bool QualityGate::Admit(double au) {
  if (!(au < theta_q_)) return false;
  theta_q_ = (1.0 - gamma_) * theta_q_ + gamma_ * au;
  return true;
}

void EvolutionBuffer::Add(int class_k, CachedItem item) {
  entries_.push_back({class_k, std::move(item)});
}

int EvolutionBuffer::Flush(VisualCache& cache, double tau_sim) {
  int changed = 0;
  for (Entry& e : entries_) {
    const CacheUpdateResult r = cache.Update(e.class_k, std::move(e.item), tau_sim);
    changed += r.action == CacheAction::kKept ? 0 : 1;
  }
  entries_.clear();
  return changed;
}

}  // namespace opentta

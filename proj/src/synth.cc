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

#include "opentta/synth.h"

#include <cmath>
#include <limits>
#include <numbers>

namespace opentta {

namespace {

enum Section : std::uint64_t {
  kIdCenters = 1,
  kOodCenters = 2,
  kDriftDirections = 3,
  kIdNoise = 4,
  kOodNoise = 5,
  kShuffle = 6,
};

constexpr int kMaxCenterAttempts = 10000;

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vector RandomUnit(SynthRng& rng, int dim) {
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v[i] = rng.Normal();
  return L2Normalize(v);
}

// Appends `count` centers, each with cosine below `bound` to all previous
// ones (including `existing`).
// Each center is normalize(sqrt(rho) * shared + sqrt(1 - rho) * random).
void DrawCenters(SynthRng& rng, int dim, int count, double bound, double rho,
                 std::vector<Vector>& centers) {
  if (count == 0) return;
  const Vector shared = RandomUnit(rng, dim);
  for (int c = 0; c < count; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxCenterAttempts && !placed; ++attempt) {
      Vector candidate = RandomUnit(rng, dim);
      if (rho > 0.0) {
        candidate = L2Normalize(std::sqrt(rho) * shared +
                                std::sqrt(1.0 - rho) * candidate);
      }
      bool ok = true;
      for (const Vector& other : centers) {
        if (candidate.dot(other) >= bound) {
          ok = false;
          break;
        }
      }
      if (ok) {
        centers.push_back(std::move(candidate));
        placed = true;
      }
    }
    if (!placed) {
      throw Error("cannot place " + std::to_string(centers.size() + 1) +
                  " centers in dimension " + std::to_string(dim) +
                  " with pairwise cosine below " + std::to_string(bound));
    }
  }
}

// Rotates `center` by `angle` toward a random direction orthogonal to it.
Vector Rotate(const Vector& center, double angle, SynthRng& rng) {
  if (angle == 0.0) return center;
  Vector w = RandomUnit(rng, static_cast<int>(center.size()));
  w -= w.dot(center) * center;
  w = L2Normalize(w);
  return std::cos(angle) * center + std::sin(angle) * w;
}

std::vector<float> Perturb(const Vector& center, double concentration,
                           SynthRng& rng) {
  Vector x = center;
  const double sigma = 1.0 / concentration;
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += sigma * rng.Normal();
  return ToFloats(L2Normalize(x));
}

void Check(const SynthSpec& s) {
  if (s.dim < 2) throw Error("synth: dim must be at least 2");
  if (s.k_id < 2) throw Error("synth: k_id must be at least 2");
  if (s.k_ood < 0) throw Error("synth: k_ood must be non-negative");
  if (s.samples < 0) throw Error("synth: samples must be non-negative");
  if (!(s.ood_fraction >= 0.0 && s.ood_fraction <= 1.0)) {
    throw Error("synth: ood_fraction must be in [0,1]");
  }
  if (s.ood_fraction > 0.0 && s.k_ood == 0) {
    throw Error("synth: csOOD samples requested without csOOD clusters");
  }
  if (!(s.concentration > 0.0)) throw Error("synth: concentration must be positive");
  if (!(s.drift >= 0.0)) throw Error("synth: drift must be non-negative");
  if (!(s.shared_weight >= 0.0 && s.shared_weight < 1.0)) {
    throw Error("synth: shared_weight must be in [0,1)");
  }
  if (!(s.max_center_cosine > -1.0 && s.max_center_cosine <= 1.0)) {
    throw Error("synth: max_center_cosine must be in (-1,1]");
  }
}

}  // namespace

SynthRng::SynthRng(std::uint64_t seed, std::uint64_t section)
    : engine_(SplitMix64(SplitMix64(seed) ^ (section * 0xd1b54a32d192ed03ULL))) {}

double SynthRng::Uniform() {
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double SynthRng::Normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(Uniform()));
  const double theta = 2.0 * std::numbers::pi * Uniform();
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t SynthRng::Below(std::uint64_t n) {
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

SynthData Generate(const SynthSpec& spec) {
  Check(spec);
  SynthRng id_center_rng(spec.seed, kIdCenters);
  SynthRng ood_center_rng(spec.seed, kOodCenters);
  SynthRng drift_rng(spec.seed, kDriftDirections);
  SynthRng id_noise(spec.seed, kIdNoise);
  SynthRng ood_noise(spec.seed, kOodNoise);
  SynthRng shuffle_rng(spec.seed, kShuffle);

  std::vector<Vector> centers;
  DrawCenters(id_center_rng, spec.dim, spec.k_id, spec.max_center_cosine,
              spec.shared_weight, centers);
  DrawCenters(ood_center_rng, spec.dim, spec.k_ood, spec.max_center_cosine,
              spec.shared_weight, centers);

  SynthData data;
  Matrix rows(spec.k_id, spec.dim);
  for (int k = 0; k < spec.k_id; ++k) rows.row(k) = centers[k].transpose();
  data.prototypes = PrototypeSet(std::move(rows));

  std::vector<Vector> shifted(spec.k_id);
  for (int k = 0; k < spec.k_id; ++k) {
    shifted[k] = Rotate(centers[k], spec.drift, drift_rng);
  }

  const int n_ood = static_cast<int>(std::lround(spec.samples * spec.ood_fraction));
  const int n_id = spec.samples - n_ood;
  data.stream.reserve(spec.samples);
  for (int i = 0; i < n_id; ++i) {
    const int k = i % spec.k_id;
    data.stream.push_back({k, Perturb(shifted[k], spec.concentration, id_noise)});
  }
  for (int i = 0; i < n_ood; ++i) {
    const Vector& c = centers[spec.k_id + i % spec.k_ood];
    data.stream.push_back({-1, Perturb(c, spec.concentration, ood_noise)});
  }
  // Fisher-Yates with our own index draws; std::shuffle is not portable.
  for (std::size_t i = data.stream.size(); i > 1; --i) {
    const std::size_t j = shuffle_rng.Below(i);
    std::swap(data.stream[i - 1], data.stream[j]);
  }
  data.labels.reserve(data.stream.size());
  for (const StreamRecord& r : data.stream) data.labels.push_back(r.label);
  return data;
}

SynthPaths WriteSynth(const SynthData& data, const std::string& prefix) {
  SynthPaths paths{prefix + ".protos", prefix + ".stream", prefix + ".manifest"};
  WritePrototypes(paths.prototypes, data.prototypes);
  WriteStream(paths.stream, static_cast<std::uint32_t>(data.prototypes.dim()),
              static_cast<std::uint32_t>(data.prototypes.num_classes()),
              data.stream);
  WriteManifest(paths.manifest, data.labels);
  return paths;
}

std::vector<EvalRecord> NearestPrototypeRecords(
    const PrototypeSet& prototypes, const std::vector<StreamRecord>& stream) {
  std::vector<EvalRecord> out;
  out.reserve(stream.size());
  for (const StreamRecord& r : stream) {
    const Vector cos = CosineToRows(ToVector(r.feature), prototypes);
    const int best = ArgmaxPresent(cos, prototypes.present_flags());
    out.push_back({r.label, best, cos[best]});
  }
  return out;
}

}  // namespace opentta

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

#include "opentta/pipeline.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <utility>

#include "opentta/io.h"

namespace opentta {

namespace {

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot create " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

PrototypeSet CheckedText(PrototypeSet text) {
  if (text.num_classes() < 2) throw Error("need at least two classes");
  if (text.num_present() != text.num_classes()) {
    throw Error("text prototypes must all be present");
  }
  if (!text.matrix().allFinite()) throw Error("non-finite text prototype");
  return text;
}

}  // namespace

AdaptationState::AdaptationState(PrototypeSet text, const EngineConfig& config)
    : text_protos(CheckedText(std::move(text))),
      cache(text_protos.num_classes(), text_protos.dim(), config.cache_size),
      window_c(config.window_c),
      window_g(config.window_g),
      gate(config.theta_q_init, config.gamma),
      verifier(config) {}

Pipeline::Pipeline(PrototypeSet text, const EngineConfig& config)
    : config_((Validate(config), config)),
      state_(std::move(text), config_),
      alignment_(state_.text_protos.num_classes(), state_.text_protos.dim(),
                 config_) {
  const int k = state_.text_protos.num_classes();
  const int d = state_.text_protos.dim();
  ws_.visual = PrototypeSet(Matrix::Zero(k, d), std::vector<bool>(k, false));
  ws_.visual_unit = Matrix::Zero(k, d);
  ws_.visual_norms = Vector::Zero(k);
  ws_.shifted_text = Matrix::Zero(k, d);
  ws_.shifted_sq = Vector::Zero(k);
  ws_.shifted_dot = Vector::Zero(k);
  ws_.shifted_visual_norms = Vector::Zero(k);
  ws_.text_moves.assign(k, 0);
  ws_.visual_moves.assign(k, 0);
  RefreshText();
}

void Pipeline::RefreshText() {
  const Matrix& p = state_.text_protos.matrix();
  ws_.text_norms = p.rowwise().norm();
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    if (ws_.text_norms[k] == 0.0) throw Error("degenerate text prototype");
  }
  ws_.text_unit = p.array().colwise() / ws_.text_norms.array();
  alignment_.Reset(state_.text_protos, ws_.visual);
  ApplyAlignment();
}

void Pipeline::RefreshVisualRow(int k) {
  const bool present = state_.cache.Mean(k, ws_.visual.mutable_matrix().row(k));
  ws_.visual.set_present(k, present);
  if (!present) {
    ws_.visual_norms[k] = 0.0;
    ws_.visual_unit.row(k).setZero();
    alignment_.Reset(state_.text_protos, ws_.visual);
  } else {
    ws_.visual_norms[k] = ws_.visual.row(k).norm();
    ws_.visual_unit.row(k) = ws_.visual.row(k) / ws_.visual_norms[k];
    alignment_.SetVisual(k, ws_.visual.row(k));
  }
  ApplyAlignment();
}

namespace {

void CollectMoved(const std::vector<char>& moves, std::vector<int>* out) {
  out->clear();
  for (std::size_t k = 0; k < moves.size(); ++k) {
    if (moves[k]) out->push_back(static_cast<int>(k));
  }
}

}  // namespace

void Pipeline::ApplyAlignment() {
  ++alignment_updates_;
  const Matrix& gt = alignment_.text_gradient();
  for (int k : alignment_.changed_text_rows()) {
    ws_.shifted_text.row(k) =
        state_.text_protos.row(k) - config_.lr_text * gt.row(k);
    ws_.shifted_sq[k] = ws_.shifted_text.row(k).squaredNorm();
    ws_.shifted_dot[k] = ws_.shifted_text.row(k).dot(ws_.text_unit.row(k));
    ws_.text_moves[k] = gt.row(k).any() ? 1 : 0;
  }
  const Matrix& gv = alignment_.visual_gradient();
  for (int k : alignment_.changed_visual_rows()) {
    ws_.visual_moves[k] = gv.row(k).any() ? 1 : 0;
    if (!ws_.visual.present(k)) {
      ws_.shifted_visual_norms[k] = 0.0;
      continue;
    }
    const double norm = ws_.visual_moves[k]
                            ? (ws_.visual.row(k) - config_.lr_vis * gv.row(k)).norm()
                            : ws_.visual_norms[k];
    if (norm == 0.0) throw Error("degenerate visual prototype");
    ws_.shifted_visual_norms[k] = norm;
  }
  CollectMoved(ws_.text_moves, &ws_.text_moved);
  CollectMoved(ws_.visual_moves, &ws_.visual_moved);
}

SampleVerdict Pipeline::Process(const Vector& f) {
  CheckEmbedding(f);
  const int num_classes = state_.text_protos.num_classes();
  if (f.size() != state_.text_protos.dim()) {
    throw Error("sample dimension " + std::to_string(f.size()) +
                " does not match prototype dimension " +
                std::to_string(state_.text_protos.dim()));
  }
  const double scale = config_.EvidenceScale();
  SampleVerdict v;
  ++state_.n_proc;

  // Stage 1: first check and cache admission.
  const Vector u = f / f.norm();
  const Vector z = ws_.text_unit * u;
  const std::vector<bool>& all = state_.text_protos.present_flags();
  const int initial_class = ArgmaxPresent(z, all);
  v.s_open_init = 1.0 - z[initial_class];
  state_.window_c.Push(v.s_open_init);
  const GateThresholds thresholds =
      state_.window_c.Thresholds(config_.theta_a_pct, config_.theta_b_pct);
  v.tier = Triage(v.s_open_init, thresholds);
  CacheUpdateResult admission;
  if (v.tier == Tier::kConfident) {
    admission = state_.cache.Update(initial_class, MakeCachedItem(f, z, scale),
                                    config_.tau_sim);
    if (admission.action != CacheAction::kKept) {
      RefreshVisualRow(initial_class);
    }
  }

  // Stage 2: temporary prototypes, as cosines to f. With plain gradient
  // descent the text step is B_k - c_k (u - z_k t_k) for B = P_t - lr * the
  // alignment gradient, so its cosine and norm follow from B u and
  // per-version constants. P_t u is |P_t,k| z_k; only rows with a nonzero
  // alignment gradient need their own dot product.
  const Vector visual_raw = ws_.visual_unit * u;
  Vector adapted, visual_cos;
  Vector step_coef;  // lr_text * dL/dz_k * scale / |P_t,k|, gradient descent
  Vector step_sq;
  std::optional<TemporaryPrototypes> reference;
  if (v.tier == Tier::kSkipped) {
    adapted = z;
    visual_cos = visual_raw;
  } else if (config_.optimizer == Optimizer::kGradientDescent) {
    const Vector alpha = Evidence(z, scale);
    const Vector dl = config_.lambda_au * AleatoricGradient(alpha) +
                      EpistemicGradient(alpha);
    Vector bu = ws_.text_norms.cwiseProduct(z);
    const Matrix& gt = alignment_.text_gradient();
    for (int k : ws_.text_moved) bu[k] -= config_.lr_text * gt.row(k).dot(u);
    step_coef = Vector::Zero(num_classes);
    step_sq.resize(num_classes);
    adapted.resize(num_classes);
    for (int k = 0; k < num_classes; ++k) {
      if (z[k] * scale > 0.0) {
        step_coef[k] = config_.lr_text * dl[k] * scale / ws_.text_norms[k];
      }
      const double c = step_coef[k];
      const double off = 1.0 - z[k] * z[k];
      step_sq[k] = ws_.shifted_sq[k] + c * c * off -
                   2.0 * c * (bu[k] - z[k] * ws_.shifted_dot[k]);
      adapted[k] = (bu[k] - c * off) / std::sqrt(step_sq[k]);
    }
    visual_cos = Vector::Zero(num_classes);
    const Matrix& gv = alignment_.visual_gradient();
    for (int k = 0; k < num_classes; ++k) {
      if (!ws_.visual.present(k)) continue;
      visual_cos[k] = ws_.visual_norms[k] * visual_raw[k];
    }
    for (int k : ws_.visual_moved) {
      visual_cos[k] -= config_.lr_vis * gv.row(k).dot(u);
    }
    for (int k = 0; k < num_classes; ++k) {
      if (ws_.visual.present(k)) visual_cos[k] /= ws_.shifted_visual_norms[k];
    }
  } else {
    const Gradients alignment{alignment_.text_gradient(),
                              alignment_.visual_gradient()};
    reference = AdaptStep(f, state_.text_protos, ws_.visual, v.tier, config_,
                          &alignment);
    adapted = CosineToRows(f, reference->text);
    visual_cos = CosineToRows(f, reference->vis);
  }

  // Stage 3: final verification.
  v.s_open_final = 1.0 - adapted[ArgmaxPresent(adapted, all)];
  state_.window_g.Push(v.s_open_final);
  const VerifierDecision decision =
      state_.verifier.Verify(state_.n_proc, state_.window_g, v.s_open_final);
  v.p_ood = decision.p_ood;
  v.is_ood = decision.is_ood;

  // Stage 4: prediction and evolution.
  Vector combined = MaskedSoftmax(adapted, all, config_.tau_clip);
  for (int k = 0; k < num_classes; ++k) {
    if (ws_.visual.present(k)) {
      combined[k] += config_.aff_scale *
                     std::exp(-config_.aff_decay * (1.0 - visual_cos[k]));
    }
  }
  v.predicted_class = ArgmaxPresent(combined, all);
  if (v.is_ood && config_.revert_flagged_admission &&
      admission.action != CacheAction::kKept) {
    state_.cache.Revert(initial_class, std::move(admission));
    RefreshVisualRow(initial_class);
  }
  const Vector alpha = Evidence(adapted, scale);
  v.au = Aleatoric(alpha);
  v.eu = Epistemic(alpha);
  if (!v.is_ood && state_.gate.Admit(v.au)) {
    v.accepted_for_evolution = true;
    ++state_.n;
    PrototypeSet text_tmp;
    if (reference) {
      text_tmp = std::move(reference->text);
    } else if (v.tier == Tier::kSkipped) {
      text_tmp = PrototypeSet(ws_.text_unit);
    } else {
      Matrix rows = ws_.shifted_text;
      for (int k = 0; k < num_classes; ++k) {
        rows.row(k) -= step_coef[k] * (u.transpose() - z[k] * ws_.text_unit.row(k));
        rows.row(k) /= std::sqrt(step_sq[k]);
      }
      text_tmp = PrototypeSet(std::move(rows));
    }
    state_.text_protos = CmaUpdate(state_.text_protos, text_tmp, state_.n);
    RefreshText();
    CachedItem item;
    item.feature = u;
    item.logits = adapted;
    item.quality = v.au;
    state_.buffer.Add(v.predicted_class, std::move(item));
  }
  if (state_.n_proc % config_.flush_interval == 0 && !state_.buffer.empty()) {
    std::vector<bool> touched(num_classes, false);
    for (const auto& entry : state_.buffer.entries()) touched[entry.class_k] = true;
    if (state_.buffer.Flush(state_.cache, config_.tau_sim) > 0) {
      for (int k = 0; k < num_classes; ++k) {
        if (touched[k]) RefreshVisualRow(k);
      }
    }
    ++flushes_;
  }
  return v;
}

RunResult RunPipeline(const EngineConfig& config, const RunOptions& options) {
  PrototypeSet text = ReadPrototypes(options.prototypes);
  Pipeline pipeline(std::move(text), config);
  const int dim = pipeline.state().text_protos.dim();

  std::unique_ptr<VerdictWriter> writer;
  if (!options.verdicts.empty()) {
    writer = std::make_unique<VerdictWriter>(options.verdicts);
  }
  std::vector<SampleVerdict> verdicts;
  RunResult result;
  std::chrono::steady_clock::duration busy{};

  auto consume = [&](const StreamRecord& record) {
    if (static_cast<int>(record.feature.size()) != dim) {
      throw Error("stream dimension " + std::to_string(record.feature.size()) +
                  " does not match prototype dimension " + std::to_string(dim));
    }
    const Vector f = ToVector(record.feature);
    const auto start = std::chrono::steady_clock::now();
    const SampleVerdict v = pipeline.Process(f);
    busy += std::chrono::steady_clock::now() - start;
    if (writer) writer->Write(v);
    verdicts.push_back(v);
    ++result.samples;
  };

  const bool text_stream = options.stream.ends_with(".csv") ||
                           options.stream.ends_with(".txt");
  if (text_stream) {
    for (const StreamRecord& r : ReadTextStream(options.stream)) consume(r);
  } else {
    StreamReader reader(options.stream);
    if (static_cast<int>(reader.header().dim) != dim) {
      throw Error("stream dimension " + std::to_string(reader.header().dim) +
                  " does not match prototype dimension " + std::to_string(dim));
    }
    StreamRecord record;
    while (reader.Next(&record)) consume(record);
  }
  if (writer) writer->Close();
  if (!options.verdicts_csv.empty()) WriteVerdictsCsv(options.verdicts_csv, verdicts);
  if (!options.cache_dump.empty()) WriteCacheDump(options.cache_dump, pipeline.state().cache);

  result.processing_seconds = std::chrono::duration<double>(busy).count();
  result.accepted = pipeline.state().n;
  result.theta_q = pipeline.state().theta_q();
  result.theta_c = pipeline.state().theta_c();

  if (!options.manifest.empty()) {
    const std::vector<int> labels = ReadManifest(options.manifest);
    result.report = ComputeReport(verdicts, labels);
    if (!options.report.empty()) WriteText(options.report, FormatKeyValue(*result.report));
    if (!options.report_json.empty()) {
      WriteText(options.report_json, FormatJson(*result.report));
    }
    if (!options.records_csv.empty()) {
      std::ofstream out(options.records_csv);
      if (!out) throw Error("cannot create " + options.records_csv);
      WriteRecordsCsv(out, verdicts, labels);
    }
  }
  return result;
}

MetricsReport ReportFromFiles(const std::string& verdicts,
                              const std::string& manifest) {
  const std::vector<SampleVerdict> v = ReadVerdicts(verdicts);
  const std::vector<int> labels = ReadManifest(manifest);
  return ComputeReport(v, labels);
}

}  // namespace opentta

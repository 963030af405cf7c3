/* Copyright 2026 The noda Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef NODA_MEAN_TEACHER_HPP_
#define NODA_MEAN_TEACHER_HPP_

// Teacher-student self-training for cross-domain detection.
//
// Schedule: supervised pretraining on labelled source images, then the
// pretrained weights are copied into a teacher and a student. Each adaptation
// step the teacher pseudo-labels weakly augmented target images, the student
// trains on source labels plus pseudo-labels (strongly augmented target),
// with the hierarchical contrastive loss on target proposals and the
// adversarial domain loss on nodule-level ROI embeddings of both domains. The
// teacher then follows the student by exponential moving average.
//
// Randomness: iteration k of either phase draws from
// Rng(seed).split(kTrainStream).split(k), so an adaptation run whose extra
// terms are all disabled replays a plain supervised continuation exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "noda/adversarial.hpp"
#include "noda/contrastive.hpp"
#include "noda/detector.hpp"
#include "noda/eval.hpp"
#include "noda/geometry.hpp"
#include "noda/numerics.hpp"
#include "noda/rng.hpp"
#include "noda/synthdata.hpp"

namespace noda::mean_teacher {

struct AdaptConfig {
  double beta = 0.9996;
  double conf_thresh = 0.8;
  double pseudo_nms_thresh = 0.5;
  double roi_thresh = 0.75;
  int iters_pretrain = 2000;
  int iters_adapt = 8000;
  double lr = 0.04;
  int batch = 16;
  double w_det_src = 1.0;
  double w_det_tgt = 1.0;
  double w_contrs = 0.1;
  double w_cls = 0.1;
  double gamma = 1.0;
  bool contrast_source = false;  // also apply the contrastive loss to source proposals
  int max_contrast_positives = 32;
  int max_contrast_negatives = 32;
  int rois_per_image = 64;  // 0 keeps every candidate proposal
  double positive_fraction = 0.25;
  double near_negative_fraction = 0.5;
  contrastive::ContrastiveConfig contrastive;
  detector::DetectorConfig detector;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw std::invalid_argument(field + ": " + why);
    };
    if (!(beta >= 0.0 && beta <= 1.0)) fail("beta", "must be in [0, 1]");
    if (!(conf_thresh >= 0.0 && conf_thresh <= 1.0)) fail("conf_thresh", "must be in [0, 1]");
    if (!(pseudo_nms_thresh > 0.0 && pseudo_nms_thresh <= 1.0)) {
      fail("pseudo_nms_thresh", "must be in (0, 1]");
    }
    if (!(roi_thresh > 0.0 && roi_thresh < 1.0)) fail("roi_thresh", "must be in (0, 1)");
    if (iters_pretrain < 0) fail("iters_pretrain", "must be >= 0");
    if (iters_adapt < 0) fail("iters_adapt", "must be >= 0");
    if (!(lr >= 0.0)) fail("lr", "must be >= 0");
    if (batch < 1) fail("batch", "must be >= 1");
    if (!(w_det_src >= 0.0)) fail("w_det_src", "must be >= 0");
    if (!(w_det_tgt >= 0.0)) fail("w_det_tgt", "must be >= 0");
    if (!(w_contrs >= 0.0)) fail("w_contrs", "must be >= 0");
    if (!(w_cls >= 0.0)) fail("w_cls", "must be >= 0");
    if (!(gamma >= 0.0)) fail("gamma", "must be >= 0");
    if (max_contrast_positives < 2) fail("max_contrast_positives", "must be >= 2");
    if (max_contrast_negatives < 2) fail("max_contrast_negatives", "must be >= 2");
    if (rois_per_image < 0) fail("rois_per_image", "must be >= 0");
    if (!(positive_fraction > 0.0 && positive_fraction <= 1.0)) {
      fail("positive_fraction", "must be in (0, 1]");
    }
    if (!(near_negative_fraction >= 0.0 && near_negative_fraction <= 1.0)) {
      fail("near_negative_fraction", "must be in [0, 1]");
    }
    contrastive.validate();
    if (detector.grid_stride < 1) fail("grid_stride", "must be >= 1");
    if (detector.scales.empty()) fail("scales", "must be nonempty");
    for (int s : detector.scales) {
      if (s < 1) fail("scales", "must be positive");
    }
    if (!(detector.jitter >= 0.0 && detector.jitter < 0.5)) fail("jitter", "must be in [0, 0.5)");
    if (detector.jitter_copies < 0) fail("jitter_copies", "must be >= 0");
    if (!(detector.init_scale > 0.0)) fail("init_scale", "must be > 0");
    if (!(detector.conv1_init > 0.0)) fail("conv1_init", "must be > 0");
    if (!(detector.conv2_init > 0.0)) fail("conv2_init", "must be > 0");
  }
};

inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kInitStream = 2;
inline constexpr std::uint64_t kClassifierStream = 3;

// ------------------------------------------------------------------ EMA

/// theta_t <- beta * theta_t + (1 - beta) * theta_s
inline ParamVec ema_update(std::span<const double> teacher, std::span<const double> student,
                           double beta) {
  if (teacher.size() != student.size()) throw std::invalid_argument("ema_update: length mismatch");
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("ema_update: beta out of [0, 1]");
  ParamVec out(teacher.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = beta * teacher[i] + (1.0 - beta) * student[i];
  }
  return out;
}

// --------------------------------------------------------- augmentation

enum class AugmentMode { kWeak, kStrong };

struct Augmented {
  Grid3 image;
  bool flipped = false;
};

inline Grid3 flip_horizontal(const Grid3& g) {
  Grid3 out(g.channels, g.height, g.width);
  for (int c = 0; c < g.channels; ++c) {
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) out.at(c, y, x) = g.at(c, y, g.width - 1 - x);
    }
  }
  return out;
}

inline std::vector<Box> flip_boxes(const std::vector<Box>& boxes, double width) {
  std::vector<Box> out;
  out.reserve(boxes.size());
  for (const Box& b : boxes) out.emplace_back(width - b.x_max, b.y_min, width - b.x_min, b.y_max);
  return out;
}

/// Photometric part of the strong augmentation: brightness and contrast
/// scaled by factors in [0.8, 1.2], Gaussian noise with sigma up to 0.05,
/// one erased rectangle of up to 10% of the area filled with the image mean,
/// then clipping to [0, 1]. Geometry is untouched.
inline Grid3 photometric_jitter(const Grid3& in, Rng& rng) {
  Grid3 g = in;
  const double contrast = rng.uniform(0.8, 1.2);
  const double brightness = rng.uniform(0.8, 1.2);
  const double sigma = rng.uniform(0.0, 0.05);
  const double mean =
      std::accumulate(g.values.begin(), g.values.end(), 0.0) / static_cast<double>(g.size());
  for (double& v : g.values) {
    v = ((v - mean) * contrast + mean) * brightness + sigma * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
  }
  const double area = rng.uniform(0.0, 0.1) * g.height * g.width;
  const double aspect = rng.uniform(0.5, 2.0);
  const int eh = std::clamp(static_cast<int>(std::sqrt(area * aspect)), 0, g.height);
  const int ew = std::clamp(static_cast<int>(std::sqrt(area / aspect)), 0, g.width);
  const int ey = rng.uniform_int(0, g.height - eh);
  const int ex = rng.uniform_int(0, g.width - ew);
  const double fill = std::clamp(
      std::accumulate(g.values.begin(), g.values.end(), 0.0) / static_cast<double>(g.size()), 0.0,
      1.0);
  for (int c = 0; c < g.channels; ++c) {
    for (int y = ey; y < ey + eh; ++y) {
      for (int x = ex; x < ex + ew; ++x) g.at(c, y, x) = fill;
    }
  }
  return g;
}

/// weak: horizontal flip with probability 0.5. strong: weak followed by
/// photometric_jitter.
inline Augmented augment(const Grid3& image, AugmentMode mode, Rng& rng) {
  Augmented a;
  a.flipped = rng.bernoulli(0.5);
  a.image = a.flipped ? flip_horizontal(image) : image;
  if (mode == AugmentMode::kStrong) a.image = photometric_jitter(a.image, rng);
  return a;
}

// -------------------------------------------------------- pseudo labels

struct PseudoLabel {
  Box box;
  double confidence = 0.0;
};

inline std::vector<PseudoLabel> generate_pseudo_labels(std::span<const double> teacher,
                                                       const Grid3& weak_image,
                                                       const detector::DetectorConfig& det,
                                                       double conf_thresh, double nms_thresh) {
  std::vector<PseudoLabel> out;
  for (const Detection& d : detector::infer(weak_image, teacher, det, conf_thresh, nms_thresh)) {
    out.push_back({d.box, d.score});
  }
  return out;
}

// ------------------------------------------------------- training state

struct TeacherStudentState {
  ParamVec teacher;
  ParamVec student;
  adversarial::DomainClassifier classifier;
  std::int64_t iteration = 0;
};

struct LossBreakdown {
  double det_src = 0.0;
  double det_tgt = 0.0;
  double region = 0.0;
  double pixel = 0.0;
  double contrs = 0.0;  // lambda * region + (1 - lambda) * pixel, batch mean
  double cls = 0.0;     // mean domain loss over ROI features
  double total = 0.0;   // weighted sum of det_src, det_tgt, contrs, cls
  std::size_t pseudo_labels = 0;
  std::size_t target_images_skipped = 0;  // no pseudo-labels
  std::size_t contrast_images = 0;
  std::size_t domain_features = 0;
};

inline double weighted_total(const LossBreakdown& b, const AdaptConfig& cfg) {
  return cfg.w_det_src * b.det_src + cfg.w_det_tgt * b.det_tgt + cfg.w_contrs * b.contrs +
         cfg.w_cls * b.cls;
}

namespace detail {

struct ImagePass {
  detector::ForwardPass fwd;
  detector::RoiGrads grads;
  ProposalMatch match;
  double head_scale = 0.0;
};

inline std::vector<Box> boxes_of(const std::vector<detector::Proposal>& ps) {
  std::vector<Box> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(p.box);
  return out;
}

inline std::vector<Box> training_proposals(const Grid3& image, const std::vector<Box>& labels,
                                           const detector::DetectorConfig& det, Rng& rng) {
  auto grid = detector::propose(image.width, image.height, det);
  auto jit = detector::jittered_proposals(labels, image.width, image.height, det, rng);
  grid.insert(grid.end(), jit.begin(), jit.end());
  return boxes_of(grid);
}

inline std::vector<std::size_t> subsample(const std::vector<std::size_t>& idx, int cap, Rng& rng) {
  if (static_cast<int>(idx.size()) <= cap) return idx;
  // Partial Fisher-Yates, then restore ascending order.
  std::vector<std::size_t> v = idx;
  for (int i = 0; i < cap; ++i) {
    const int j = rng.uniform_int(i, static_cast<int>(v.size()) - 1);
    std::swap(v[i], v[j]);
  }
  v.resize(cap);
  std::sort(v.begin(), v.end());
  return v;
}

// Candidate proposals are the grid plus jittered labels; a fixed budget of
// them is kept for the loss: positives up to positive_fraction of the
// budget, then negatives, of which up to near_negative_fraction overlap a
// label (IOU > 0.1) and the rest are drawn from all negatives.
inline std::vector<Box> sample_rois(const std::vector<Box>& candidates,
                                    const std::vector<Box>& labels, const AdaptConfig& cfg,
                                    Rng& rng) {
  if (cfg.rois_per_image <= 0) return candidates;
  const ProposalMatch m = match_proposals(candidates, labels, cfg.roi_thresh);
  const int max_pos = static_cast<int>(cfg.positive_fraction * cfg.rois_per_image);
  const auto pos = subsample(m.positive, max_pos, rng);
  const int neg_budget = cfg.rois_per_image - static_cast<int>(pos.size());
  std::vector<std::size_t> near, far;
  for (std::size_t i : m.negative) (m.best_iou[i] > 0.1 ? near : far).push_back(i);
  const auto near_pick =
      subsample(near, static_cast<int>(cfg.near_negative_fraction * neg_budget), rng);
  std::vector<std::size_t> rest;
  std::set_difference(m.negative.begin(), m.negative.end(), near_pick.begin(), near_pick.end(),
                      std::back_inserter(rest));
  const auto rest_pick = subsample(rest, neg_budget - static_cast<int>(near_pick.size()), rng);
  std::vector<Box> out;
  out.reserve(pos.size() + near_pick.size() + rest_pick.size());
  for (std::size_t i : pos) out.push_back(candidates[i]);
  for (std::size_t i : near_pick) out.push_back(candidates[i]);
  for (std::size_t i : rest_pick) out.push_back(candidates[i]);
  return out;
}

// Forward plus detection-loss upstream gradients for one labelled image.
inline ImagePass labelled_pass(const Grid3& image, const std::vector<Box>& labels,
                               std::span<const double> params, const AdaptConfig& cfg, Rng& rng,
                               double* loss_out) {
  ImagePass p;
  const auto candidates = training_proposals(image, labels, cfg.detector, rng);
  p.fwd = detector::forward(image, params, sample_rois(candidates, labels, cfg, rng));
  p.match = match_proposals(p.fwd.proposals, labels, cfg.roi_thresh);
  const detector::DetectionLoss dl =
      detector::detection_loss(p.fwd.outputs, p.fwd.proposals, p.match, labels);
  p.grads = detector::RoiGrads(p.fwd.outputs.size());
  p.grads.d_logit = dl.d_logit;
  p.grads.d_deltas = dl.d_deltas;
  *loss_out = dl.loss;
  return p;
}

inline void ensure_flat_grads(ImagePass& p) {
  if (p.grads.d_flat.empty()) p.grads.d_flat.assign(p.fwd.rois.size(), Vec());
}

inline void add_flat_grad(ImagePass& p, std::size_t roi, std::span<const double> g, double scale) {
  ensure_flat_grads(p);
  Vec& dst = p.grads.d_flat[roi];
  if (dst.empty()) dst.assign(detector::kEmbeddingDim, 0.0);
  axpy(scale, g, dst);
}

struct ContrastTerms {
  double region = 0.0;
  double pixel = 0.0;
  double combined = 0.0;
};

// Hierarchical contrastive loss on one image's proposals; gradients scaled by
// `scale` are added to the image's embedding gradients.
inline ContrastTerms contrast_image(ImagePass& p, const AdaptConfig& cfg, double scale, Rng& rng) {
  const auto pos = subsample(p.match.positive, cfg.max_contrast_positives, rng);
  const auto neg = subsample(p.match.negative, cfg.max_contrast_negatives, rng);
  ContrastTerms t;
  if (pos.empty() && neg.empty()) return t;
  std::vector<Vec> pos_flat, neg_flat;
  std::vector<Grid3> pos_grid, neg_grid;
  for (std::size_t i : pos) {
    pos_flat.push_back(p.fwd.rois[i].flat);
    pos_grid.push_back(p.fwd.rois[i].grid);
  }
  for (std::size_t i : neg) {
    neg_flat.push_back(p.fwd.rois[i].flat);
    neg_grid.push_back(p.fwd.rois[i].grid);
  }
  const double lambda = cfg.contrastive.lambda;
  const auto region = contrastive::region_loss(pos_flat, neg_flat, cfg.contrastive);
  const auto pixel = contrastive::pixel_loss(pos_grid, neg_grid, cfg.contrastive);
  t.region = region.loss;
  t.pixel = pixel.loss;
  t.combined = contrastive::hierarchical_loss(t.region, t.pixel, lambda);
  for (std::size_t k = 0; k < pos.size(); ++k) {
    add_flat_grad(p, pos[k], region.grads_pos[k], scale * lambda);
    add_flat_grad(p, pos[k], pixel.grads_pos[k].values, scale * (1.0 - lambda));
  }
  for (std::size_t k = 0; k < neg.size(); ++k) {
    add_flat_grad(p, neg[k], region.grads_neg[k], scale * lambda);
    add_flat_grad(p, neg[k], pixel.grads_neg[k].values, scale * (1.0 - lambda));
  }
  return t;
}

inline std::vector<std::size_t> sample_batch(std::size_t n, int batch, Rng rng) {
  std::vector<std::size_t> idx(batch);
  for (int b = 0; b < batch; ++b) idx[b] = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1));
  return idx;
}

// Sub-streams of one iteration's generator.
enum Stream : std::uint64_t {
  kSourceBatch = 0,
  kSourceAug = 1,
  kTargetBatch = 2,
  kTargetAug = 3,
  kContrast = 4,
};

// Weak flip on a labelled source image; used by both training phases.
inline ImagePass source_pass(const synth::SynthSample& s, std::span<const double> params,
                             const AdaptConfig& cfg, Rng rng, double* loss) {
  const Augmented a = augment(s.image, AugmentMode::kWeak, rng);
  const std::vector<Box> labels = a.flipped ? flip_boxes(s.gt_boxes, s.image.width) : s.gt_boxes;
  return labelled_pass(a.image, labels, params, cfg, rng, loss);
}

}  // namespace detail

inline Rng iteration_rng(std::uint64_t seed, std::int64_t iteration) {
  return Rng(seed).split(kTrainStream).split(static_cast<std::uint64_t>(iteration));
}

// --------------------------------------------------- supervised training

struct SupervisedStep {
  ParamVec params;
  double loss = 0.0;
};

/// One SGD step of source-only supervised training, drawing from the
/// iteration generator `rng`.
inline SupervisedStep supervised_step(std::span<const double> params,
                                      const std::vector<synth::SynthSample>& source,
                                      const AdaptConfig& cfg, const Rng& rng) {
  if (source.empty()) throw std::invalid_argument("supervised_step: empty source data");
  const auto batch = detail::sample_batch(source.size(), cfg.batch, rng.split(detail::kSourceBatch));
  const Rng aug = rng.split(detail::kSourceAug);
  const double scale = cfg.w_det_src / static_cast<double>(cfg.batch);
  ParamVec grads(params.size(), 0.0);
  SupervisedStep out;
  for (int b = 0; b < cfg.batch; ++b) {
    double loss = 0.0;
    detail::ImagePass p = detail::source_pass(source[batch[b]], params, cfg, aug.split(b), &loss);
    detector::backward(p.fwd, p.grads, scale, params, grads);
    out.loss += loss / cfg.batch;
  }
  out.params = sgd_step(params, grads, cfg.lr);
  return out;
}

struct LogRow {
  std::int64_t iteration = 0;
  LossBreakdown losses;
  double lr = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;

  std::string to_csv() const {
    std::string out =
        "iteration,total,det_src,det_tgt,contrs,region,pixel,cls,pseudo_labels,"
        "target_images_skipped,lr\n";
    for (const LogRow& r : rows) {
      const LossBreakdown& l = r.losses;
      out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{:.17g}\n",
                         r.iteration, l.total, l.det_src, l.det_tgt, l.contrs, l.region, l.pixel,
                         l.cls, l.pseudo_labels, l.target_images_skipped, r.lr);
    }
    return out;
  }
};

struct SupervisedRun {
  ParamVec params;
  TrainingLog log;
};

/// Iterations [first, first + count) of source-only training from `params`.
inline SupervisedRun supervised_train(ParamVec params, const std::vector<synth::SynthSample>& source,
                                      const AdaptConfig& cfg, std::uint64_t seed,
                                      std::int64_t first, std::int64_t count) {
  SupervisedRun run;
  for (std::int64_t k = first; k < first + count; ++k) {
    SupervisedStep s = supervised_step(params, source, cfg, iteration_rng(seed, k));
    params = std::move(s.params);
    LogRow row;
    row.iteration = k;
    row.losses.det_src = s.loss;
    row.losses.total = cfg.w_det_src * s.loss;
    row.lr = cfg.lr;
    run.log.rows.push_back(row);
  }
  run.params = std::move(params);
  return run;
}

inline ParamVec initial_params(const AdaptConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng(seed).split(kInitStream);
  return detector::init_params(rng, cfg.detector);
}

inline SupervisedRun run_pretrain(const std::vector<synth::SynthSample>& source,
                                  const AdaptConfig& cfg, std::uint64_t seed) {
  if (source.empty()) throw std::invalid_argument("run_pretrain: empty source data");
  return supervised_train(initial_params(cfg, seed), source, cfg, seed, 0, cfg.iters_pretrain);
}

// ----------------------------------------------------------- adaptation

struct AdaptStep {
  TeacherStudentState state;
  LossBreakdown losses;
};

/// One mutual-learning step; see the file comment for the sequence.
inline AdaptStep adapt_step(const TeacherStudentState& state,
                            const std::vector<synth::SynthSample>& source,
                            const std::vector<synth::SynthSample>& target, const AdaptConfig& cfg,
                            const Rng& rng) {
  if (source.empty() || target.empty()) throw std::invalid_argument("adapt_step: empty batch");
  const std::span<const double> student = state.student;
  const double inv_b = 1.0 / static_cast<double>(cfg.batch);
  LossBreakdown lb;

  // Source: supervised detection terms, exactly as in supervised_step.
  const auto src_idx = detail::sample_batch(source.size(), cfg.batch, rng.split(detail::kSourceBatch));
  const Rng src_aug = rng.split(detail::kSourceAug);
  const double src_scale = cfg.w_det_src * inv_b;
  std::vector<detail::ImagePass> src_passes;
  src_passes.reserve(cfg.batch);
  for (int b = 0; b < cfg.batch; ++b) {
    double loss = 0.0;
    src_passes.push_back(detail::source_pass(source[src_idx[b]], student, cfg, src_aug.split(b), &loss));
    src_passes.back().head_scale = src_scale;
    lb.det_src += loss * inv_b;
  }

  // Target: teacher pseudo-labels on the weak view, student on the strong view.
  const auto tgt_idx = detail::sample_batch(target.size(), cfg.batch, rng.split(detail::kTargetBatch));
  const Rng tgt_aug = rng.split(detail::kTargetAug);
  Rng contrast_rng = rng.split(detail::kContrast);
  const bool need_student_target = cfg.w_det_tgt > 0.0 || cfg.w_contrs > 0.0 || cfg.w_cls > 0.0;
  std::vector<detail::ImagePass> tgt_passes;
  std::vector<bool> has_pseudo;
  for (int b = 0; b < cfg.batch; ++b) {
    Rng r = tgt_aug.split(b);
    const Augmented weak = augment(target[tgt_idx[b]].image, AugmentMode::kWeak, r);
    const auto pseudo = generate_pseudo_labels(state.teacher, weak.image, cfg.detector,
                                               cfg.conf_thresh, cfg.pseudo_nms_thresh);
    lb.pseudo_labels += pseudo.size();
    if (pseudo.empty()) ++lb.target_images_skipped;
    if (!need_student_target) continue;
    const Grid3 strong = photometric_jitter(weak.image, r);
    std::vector<Box> labels;
    for (const auto& pl : pseudo) labels.push_back(pl.box);
    double loss = 0.0;
    tgt_passes.push_back(detail::labelled_pass(strong, labels, student, cfg, r, &loss));
    has_pseudo.push_back(!pseudo.empty());
    if (pseudo.empty()) {
      tgt_passes.back().head_scale = 0.0;
    } else {
      tgt_passes.back().head_scale = cfg.w_det_tgt * inv_b;
      lb.det_tgt += loss * inv_b;
    }
  }

  // Hierarchical contrastive loss, batch mean over images.
  if (cfg.w_contrs > 0.0) {
    auto run = [&](std::vector<detail::ImagePass>& passes) {
      for (auto& p : passes) {
        const auto t = detail::contrast_image(p, cfg, cfg.w_contrs * inv_b, contrast_rng);
        lb.region += t.region * inv_b;
        lb.pixel += t.pixel * inv_b;
        lb.contrs += t.combined * inv_b;
        ++lb.contrast_images;
      }
    };
    run(tgt_passes);
    if (cfg.contrast_source) run(src_passes);
  }

  // Domain classifier on the pooled ROI embeddings of both domains.
  adversarial::DomainClassifier clf = state.classifier;
  if (cfg.w_cls > 0.0) {
    std::vector<Vec> feats;
    std::vector<adversarial::DomainLabel> labels;
    std::vector<std::pair<detail::ImagePass*, std::size_t>> where;
    auto collect = [&](std::vector<detail::ImagePass>& passes, adversarial::DomainLabel label) {
      for (auto& p : passes) {
        for (std::size_t i = 0; i < p.fwd.rois.size(); ++i) {
          feats.push_back(p.fwd.rois[i].flat);
          labels.push_back(label);
          where.emplace_back(&p, i);
        }
      }
    };
    collect(src_passes, adversarial::DomainLabel::kSource);
    collect(tgt_passes, adversarial::DomainLabel::kTarget);
    if (!feats.empty()) {
      const auto ndl = adversarial::ndl_step(feats, labels, clf, cfg.gamma);
      lb.cls = ndl.loss;
      lb.domain_features = feats.size();
      for (std::size_t k = 0; k < feats.size(); ++k) {
        detail::add_flat_grad(*where[k].first, where[k].second, ndl.feature_grads[k], cfg.w_cls);
      }
      ParamVec cg = ndl.classifier_grads;
      for (double& g : cg) g *= cfg.w_cls;
      clf.params = sgd_step(clf.params, cg, cfg.lr);
    }
  }

  ParamVec grads(student.size(), 0.0);
  for (const auto& p : src_passes) detector::backward(p.fwd, p.grads, p.head_scale, student, grads);
  for (const auto& p : tgt_passes) detector::backward(p.fwd, p.grads, p.head_scale, student, grads);

  AdaptStep out;
  out.state.student = sgd_step(student, grads, cfg.lr);
  out.state.teacher = ema_update(state.teacher, out.state.student, cfg.beta);
  out.state.classifier = std::move(clf);
  out.state.iteration = state.iteration + 1;
  lb.total = weighted_total(lb, cfg);
  out.losses = lb;
  return out;
}

inline TeacherStudentState init_state(const ParamVec& pretrained, const AdaptConfig& cfg,
                                      std::uint64_t seed) {
  TeacherStudentState s;
  s.teacher = pretrained;
  s.student = pretrained;
  Rng rng = Rng(seed).split(kClassifierStream);
  s.classifier = adversarial::DomainClassifier::init(
      adversarial::ClassifierShape{detector::kEmbeddingDim, 64}, rng, cfg.detector.init_scale);
  s.iteration = 0;
  return s;
}

struct AdaptRun {
  TeacherStudentState state;
  TrainingLog log;
};

/// Copies the pretrained weights into teacher and student and runs
/// iters_adapt steps. Step k uses the generator of global iteration
/// iters_pretrain + k.
inline AdaptRun run_adapt(const ParamVec& pretrained, const std::vector<synth::SynthSample>& source,
                          const std::vector<synth::SynthSample>& target, const AdaptConfig& cfg,
                          std::uint64_t seed) {
  AdaptRun run;
  run.state = init_state(pretrained, cfg, seed);
  for (int k = 0; k < cfg.iters_adapt; ++k) {
    const std::int64_t global = static_cast<std::int64_t>(cfg.iters_pretrain) + k;
    AdaptStep s = adapt_step(run.state, source, target, cfg, iteration_rng(seed, global));
    run.state = std::move(s.state);
    run.log.rows.push_back({global, s.losses, cfg.lr});
  }
  return run;
}

// ----------------------------------------------------------- evaluation

struct EvalConfig {
  double score_thresh = 0.05;
  double nms_thresh = 0.5;
};

inline std::vector<eval::ImageResult> detect_dataset(std::span<const double> params,
                                                     const std::vector<synth::SynthSample>& data,
                                                     const detector::DetectorConfig& det,
                                                     const EvalConfig& ev) {
  std::vector<eval::ImageResult> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    out.push_back({detector::infer(s.image, params, det, ev.score_thresh, ev.nms_thresh), s.gt_boxes});
  }
  return out;
}

inline eval::MetricsReport evaluate(std::span<const double> params,
                                    const std::vector<synth::SynthSample>& data,
                                    const detector::DetectorConfig& det, const EvalConfig& ev) {
  return eval::stratified_report(detect_dataset(params, data, det, ev));
}

}  // namespace noda::mean_teacher

#endif  // NODA_MEAN_TEACHER_HPP_

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
#ifndef NODA_DETECTOR_HPP_
#define NODA_DETECTOR_HPP_

// A small two-stage detector:
//
//   image (1xHxW) -> conv3x3/s2 (8) -> tanh -> conv3x3/s2 (16) -> tanh
//                 -> fixed multi-scale grid proposals
//                 -> 4x4 adaptive average ROI pooling (256-d embedding)
//                 -> objectness (affine + sigmoid) and box deltas (affine)
//
// Every stage has a hand-written backward pass. The flat parameter vector is
// laid out as conv1 w/b, conv2 w/b, objectness w/b, delta w/b.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "noda/geometry.hpp"
#include "noda/io.hpp"
#include "noda/numerics.hpp"
#include "noda/rng.hpp"

namespace noda::detector {

inline constexpr int kKernel = 3;
inline constexpr int kConv1Channels = 8;
inline constexpr int kConv2Channels = 16;
inline constexpr int kStride = 4;
inline constexpr int kPoolSize = 4;
inline constexpr int kEmbeddingDim = kConv2Channels * kPoolSize * kPoolSize;
inline constexpr double kObjectnessFloor = 1e-6;
// Fixed input normalisation applied before the first conv: [0, 1] -> [-2, 2].
inline constexpr double kInputShift = 0.5;
inline constexpr double kInputGain = 4.0;

struct Layout {
  static constexpr std::size_t kConv1W = 0;
  static constexpr std::size_t kConv1B = kConv1W + kConv1Channels * 1 * kKernel * kKernel;
  static constexpr std::size_t kConv2W = kConv1B + kConv1Channels;
  static constexpr std::size_t kConv2B =
      kConv2W + kConv2Channels * kConv1Channels * kKernel * kKernel;
  static constexpr std::size_t kObjW = kConv2B + kConv2Channels;
  static constexpr std::size_t kObjB = kObjW + kEmbeddingDim;
  static constexpr std::size_t kDeltaW = kObjB + 1;
  static constexpr std::size_t kDeltaB = kDeltaW + 4 * kEmbeddingDim;
  static constexpr std::size_t kSize = kDeltaB + 4;
};

struct DetectorConfig {
  int grid_stride = 16;
  std::vector<int> scales{16, 32, 48};
  double jitter = 0.1;     // relative, applied per box edge during training
  int jitter_copies = 4;   // jittered copies per labelled box
  // Uniform init bounds. The conv layers need much larger weights than the
  // heads or tanh stays near-linear and learning stalls.
  double conv1_init = 1.0;
  double conv2_init = 0.3;
  double init_scale = 0.05;  // heads
};

inline ParamVec init_params(Rng& rng, double head_scale = 0.05, double conv1_scale = 1.0,
                            double conv2_scale = 0.3) {
  ParamVec p(Layout::kSize);
  for (std::size_t i = 0; i < p.size(); ++i) {
    double s = head_scale;
    if (i < Layout::kConv2W) {
      s = conv1_scale;
    } else if (i < Layout::kObjW) {
      s = conv2_scale;
    }
    p[i] = rng.uniform(-s, s);
  }
  return p;
}

inline ParamVec init_params(Rng& rng, const DetectorConfig& cfg) {
  return init_params(rng, cfg.init_scale, cfg.conv1_init, cfg.conv2_init);
}

// ---------------------------------------------------------------- encoder

struct EncoderTrace {
  Grid3 input;
  Grid3 hidden;  // tanh(conv1)
  Grid3 output;  // tanh(conv2)
};

namespace detail {

inline int down2(int n) { return (n + 1) / 2; }

// 3x3 convolution, stride 2, zero padding 1, followed by tanh.
inline Grid3 conv_s2_tanh(const Grid3& in, int out_channels, const double* w,
                          const double* b) {
  const int oh = down2(in.height);
  const int ow = down2(in.width);
  Grid3 out(out_channels, oh, ow);
  for (int o = 0; o < out_channels; ++o) {
    double* dst = out.values.data() + static_cast<std::size_t>(o) * oh * ow;
    std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, b[o]);
    for (int c = 0; c < in.channels; ++c) {
      const double* src = in.values.data() + static_cast<std::size_t>(c) * in.height * in.width;
      for (int ky = 0; ky < kKernel; ++ky) {
        for (int kx = 0; kx < kKernel; ++kx) {
          const double wv = w[((o * in.channels + c) * kKernel + ky) * kKernel + kx];
          for (int y = 0; y < oh; ++y) {
            const int iy = 2 * y + ky - 1;
            if (iy < 0 || iy >= in.height) continue;
            const double* srow = src + static_cast<std::size_t>(iy) * in.width;
            double* drow = dst + static_cast<std::size_t>(y) * ow;
            for (int x = 0; x < ow; ++x) {
              const int ix = 2 * x + kx - 1;
              if (ix < 0 || ix >= in.width) continue;
              drow[x] += wv * srow[ix];
            }
          }
        }
      }
    }
  }
  for (double& v : out.values) v = std::tanh(v);
  return out;
}

// Backward of conv_s2_tanh given dL/d(out). Accumulates weight and bias
// gradients; returns dL/d(in) when `want_input_grad`.
inline std::optional<Grid3> conv_s2_tanh_backward(const Grid3& in, const Grid3& out,
                                                  const Grid3& d_out, const double* w,
                                                  double* dw, double* db,
                                                  bool want_input_grad) {
  const int oh = out.height;
  const int ow = out.width;
  std::vector<double> dpre(d_out.values.size());
  for (std::size_t i = 0; i < dpre.size(); ++i) {
    dpre[i] = d_out.values[i] * (1.0 - out.values[i] * out.values[i]);
  }
  std::optional<Grid3> d_in;
  if (want_input_grad) d_in.emplace(in.channels, in.height, in.width);
  for (int o = 0; o < out.channels; ++o) {
    const double* g = dpre.data() + static_cast<std::size_t>(o) * oh * ow;
    double bsum = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * ow; ++i) bsum += g[i];
    db[o] += bsum;
    for (int c = 0; c < in.channels; ++c) {
      const double* src = in.values.data() + static_cast<std::size_t>(c) * in.height * in.width;
      double* dsrc = want_input_grad
                         ? d_in->values.data() + static_cast<std::size_t>(c) * in.height * in.width
                         : nullptr;
      for (int ky = 0; ky < kKernel; ++ky) {
        for (int kx = 0; kx < kKernel; ++kx) {
          const std::size_t widx = ((o * in.channels + c) * kKernel + ky) * kKernel + kx;
          const double wv = w[widx];
          double acc = 0.0;
          for (int y = 0; y < oh; ++y) {
            const int iy = 2 * y + ky - 1;
            if (iy < 0 || iy >= in.height) continue;
            const double* srow = src + static_cast<std::size_t>(iy) * in.width;
            const double* grow = g + static_cast<std::size_t>(y) * ow;
            double* drow = dsrc ? dsrc + static_cast<std::size_t>(iy) * in.width : nullptr;
            for (int x = 0; x < ow; ++x) {
              const int ix = 2 * x + kx - 1;
              if (ix < 0 || ix >= in.width) continue;
              acc += grow[x] * srow[ix];
              if (drow) drow[ix] += wv * grow[x];
            }
          }
          dw[widx] += acc;
        }
      }
    }
  }
  return d_in;
}

}  // namespace detail

inline EncoderTrace encode_trace(const Grid3& image, std::span<const double> params) {
  if (image.channels != 1) {
    throw std::invalid_argument("encode: expected a single-channel image, got " +
                                std::to_string(image.channels) + " channels");
  }
  if (params.size() != Layout::kSize) {
    throw std::invalid_argument("encode: parameter vector has wrong length");
  }
  EncoderTrace t;
  t.input = image;
  for (double& v : t.input.values) v = (v - kInputShift) * kInputGain;
  t.hidden = detail::conv_s2_tanh(t.input, kConv1Channels, params.data() + Layout::kConv1W,
                                  params.data() + Layout::kConv1B);
  t.output = detail::conv_s2_tanh(t.hidden, kConv2Channels, params.data() + Layout::kConv2W,
                                  params.data() + Layout::kConv2B);
  return t;
}

/// Feature map with 16 channels at stride 4.
inline Grid3 encode(const Grid3& image, std::span<const double> params) {
  return encode_trace(image, params).output;
}

// Accumulates encoder parameter gradients for dL/d(feature map).
inline void encode_backward(const EncoderTrace& t, const Grid3& d_output,
                            std::span<const double> params, std::span<double> grads) {
  std::optional<Grid3> d_hidden = detail::conv_s2_tanh_backward(
      t.hidden, t.output, d_output, params.data() + Layout::kConv2W,
      grads.data() + Layout::kConv2W, grads.data() + Layout::kConv2B, true);
  detail::conv_s2_tanh_backward(t.input, t.hidden, *d_hidden, params.data() + Layout::kConv1W,
                                grads.data() + Layout::kConv1W, grads.data() + Layout::kConv1B,
                                false);
}

// -------------------------------------------------------------- proposals

enum class ProposalSource { kGrid, kJittered };

struct Proposal {
  Box box;
  ProposalSource source = ProposalSource::kGrid;
};

/// One square box per (grid point, scale), centred on the grid cell centre
/// and clipped to the image. Row-major over grid points, then by scale.
inline std::vector<Proposal> propose(int image_width, int image_height, int grid_stride,
                                     const std::vector<int>& scales) {
  if (grid_stride < 1) throw std::invalid_argument("propose: grid_stride < 1");
  std::vector<Proposal> out;
  const int nx = image_width / grid_stride;
  const int ny = image_height / grid_stride;
  for (int gy = 0; gy < ny; ++gy) {
    for (int gx = 0; gx < nx; ++gx) {
      const double cx = (gx + 0.5) * grid_stride;
      const double cy = (gy + 0.5) * grid_stride;
      for (int s : scales) {
        const double h = 0.5 * s;
        if (auto b = clip(Box(cx - h, cy - h, cx + h, cy + h), image_width, image_height)) {
          out.push_back({*b, ProposalSource::kGrid});
        }
      }
    }
  }
  return out;
}

inline std::vector<Proposal> propose(int image_width, int image_height,
                                     const DetectorConfig& cfg) {
  return propose(image_width, image_height, cfg.grid_stride, cfg.scales);
}

// Training-time extra proposals: each label box with every edge moved by up to
// +-jitter of the box size, clipped to the image.
inline std::vector<Proposal> jittered_proposals(const std::vector<Box>& labels, int image_width,
                                                int image_height, const DetectorConfig& cfg,
                                                Rng& rng) {
  std::vector<Proposal> out;
  for (const Box& b : labels) {
    for (int k = 0; k < cfg.jitter_copies; ++k) {
      const double jw = cfg.jitter * b.width();
      const double jh = cfg.jitter * b.height();
      const double x0 = b.x_min + rng.uniform(-jw, jw);
      const double y0 = b.y_min + rng.uniform(-jh, jh);
      const double x1 = b.x_max + rng.uniform(-jw, jw);
      const double y1 = b.y_max + rng.uniform(-jh, jh);
      if (auto m = Box::make(x0, y0, x1, y1)) {
        if (auto c = clip(*m, image_width, image_height)) {
          out.push_back({*c, ProposalSource::kJittered});
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- roi pool

// Feature-map cells averaged into each output bin, per axis.
struct RoiPlan {
  std::array<std::vector<int>, kPoolSize> rows;
  std::array<std::vector<int>, kPoolSize> cols;
};

struct RoiFeature {
  Grid3 grid;  // kConv2Channels x 4 x 4
  Vec flat;    // grid.values, channel-major
  RoiPlan plan;
};

namespace detail {

// Cells whose centres fall in [lo, hi); an empty bin takes the cell nearest
// to the bin centre.
inline std::vector<int> bin_cells(double lo, double hi, int extent) {
  std::vector<int> cells;
  const int first = std::max(0, static_cast<int>(std::ceil(lo - 0.5)));
  for (int j = first; j < extent; ++j) {
    const double c = j + 0.5;
    if (c >= hi) break;
    if (c >= lo) cells.push_back(j);
  }
  if (cells.empty()) {
    const int nearest = static_cast<int>(std::floor(0.5 * (lo + hi)));
    cells.push_back(std::clamp(nearest, 0, extent - 1));
  }
  return cells;
}

}  // namespace detail

inline RoiPlan roi_plan(const Grid3& feature_map, const Box& box, int stride = kStride) {
  const double fx0 = box.x_min / stride;
  const double fy0 = box.y_min / stride;
  const double fx1 = box.x_max / stride;
  const double fy1 = box.y_max / stride;
  if (fx1 <= 0.0 || fy1 <= 0.0 || fx0 >= feature_map.width || fy0 >= feature_map.height) {
    throw std::invalid_argument("roi_pool: box lies outside the feature map");
  }
  RoiPlan plan;
  const double bw = (fx1 - fx0) / kPoolSize;
  const double bh = (fy1 - fy0) / kPoolSize;
  for (int b = 0; b < kPoolSize; ++b) {
    plan.cols[b] = detail::bin_cells(fx0 + b * bw, fx0 + (b + 1) * bw, feature_map.width);
    plan.rows[b] = detail::bin_cells(fy0 + b * bh, fy0 + (b + 1) * bh, feature_map.height);
  }
  return plan;
}

/// Adaptive average pooling of the box footprint into a 4x4 grid.
inline RoiFeature roi_pool(const Grid3& feature_map, const Box& box, int stride = kStride) {
  RoiFeature r;
  r.plan = roi_plan(feature_map, box, stride);
  r.grid = Grid3(feature_map.channels, kPoolSize, kPoolSize);
  for (int by = 0; by < kPoolSize; ++by) {
    const auto& rows = r.plan.rows[by];
    for (int bx = 0; bx < kPoolSize; ++bx) {
      const auto& cols = r.plan.cols[bx];
      const double inv = 1.0 / static_cast<double>(rows.size() * cols.size());
      for (int c = 0; c < feature_map.channels; ++c) {
        double s = 0.0;
        for (int y : rows) {
          for (int x : cols) s += feature_map.at(c, y, x);
        }
        r.grid.at(c, by, bx) = s * inv;
      }
    }
  }
  r.flat = r.grid.values;
  return r;
}

// Scatters dL/d(pooled grid), given channel-major like RoiFeature::flat, back
// onto the feature map gradient.
inline void roi_pool_backward(const RoiPlan& plan, std::span<const double> d_flat,
                              Grid3& d_feature_map) {
  for (int by = 0; by < kPoolSize; ++by) {
    const auto& rows = plan.rows[by];
    for (int bx = 0; bx < kPoolSize; ++bx) {
      const auto& cols = plan.cols[bx];
      const double inv = 1.0 / static_cast<double>(rows.size() * cols.size());
      for (int c = 0; c < d_feature_map.channels; ++c) {
        const double g = d_flat[(static_cast<std::size_t>(c) * kPoolSize + by) * kPoolSize + bx] * inv;
        if (g == 0.0) continue;
        for (int y : rows) {
          for (int x : cols) d_feature_map.at(c, y, x) += g;
        }
      }
    }
  }
}

// ------------------------------------------------------------------- heads

struct HeadOutput {
  double logit = 0.0;
  double objectness = 0.5;  // clamped sigmoid(logit)
  std::array<double, 4> deltas{};
};

inline double clamped_sigmoid(double z) {
  return std::clamp(1.0 / (1.0 + std::exp(-z)), kObjectnessFloor, 1.0 - kObjectnessFloor);
}

inline HeadOutput heads_forward(std::span<const double> flat, std::span<const double> params) {
  if (flat.size() != static_cast<std::size_t>(kEmbeddingDim)) {
    throw std::invalid_argument("heads_forward: embedding dim mismatch");
  }
  HeadOutput h;
  h.logit = params[Layout::kObjB] + dot(flat, params.subspan(Layout::kObjW, kEmbeddingDim));
  h.objectness = clamped_sigmoid(h.logit);
  for (int k = 0; k < 4; ++k) {
    h.deltas[k] = params[Layout::kDeltaB + k] +
                  dot(flat, params.subspan(Layout::kDeltaW + k * kEmbeddingDim, kEmbeddingDim));
  }
  return h;
}

inline HeadOutput heads_forward(const RoiFeature& roi, std::span<const double> params) {
  return heads_forward(roi.flat, params);
}

// Given dL/dlogit and dL/ddeltas, accumulates head parameter gradients and
// adds dL/d(flat) into `d_flat`.
inline void heads_backward(std::span<const double> flat, double d_logit,
                           const std::array<double, 4>& d_deltas, std::span<const double> params,
                           std::span<double> grads, std::span<double> d_flat) {
  grads[Layout::kObjB] += d_logit;
  for (int i = 0; i < kEmbeddingDim; ++i) {
    grads[Layout::kObjW + i] += d_logit * flat[i];
    d_flat[i] += d_logit * params[Layout::kObjW + i];
  }
  for (int k = 0; k < 4; ++k) {
    const double g = d_deltas[k];
    if (g == 0.0) continue;
    grads[Layout::kDeltaB + k] += g;
    const std::size_t off = Layout::kDeltaW + static_cast<std::size_t>(k) * kEmbeddingDim;
    for (int i = 0; i < kEmbeddingDim; ++i) {
      grads[off + i] += g * flat[i];
      d_flat[i] += g * params[off + i];
    }
  }
}

// ------------------------------------------------------------ box deltas

// (dx, dy, dw, dh) = ((cx' - cx)/w, (cy' - cy)/h, log(w'/w), log(h'/h))
inline std::array<double, 4> encode_deltas(const Box& proposal, const Box& target) {
  return {(target.center_x() - proposal.center_x()) / proposal.width(),
          (target.center_y() - proposal.center_y()) / proposal.height(),
          std::log(target.width() / proposal.width()),
          std::log(target.height() / proposal.height())};
}

// Inverse of encode_deltas. Written edge-wise so that zero deltas reproduce
// the proposal bit for bit. Returns nullopt for a degenerate result.
inline std::optional<Box> apply_deltas(const Box& p, const std::array<double, 4>& d) {
  const double w = p.width();
  const double h = p.height();
  const double nw = w * std::exp(std::min(d[2], 4.0));
  const double nh = h * std::exp(std::min(d[3], 4.0));
  const double sx = d[0] * w;
  const double sy = d[1] * h;
  return Box::make(p.x_min + sx + 0.5 * (w - nw), p.y_min + sy + 0.5 * (h - nh),
                   p.x_max + sx - 0.5 * (w - nw), p.y_max + sy - 0.5 * (h - nh));
}

// ------------------------------------------------------------------- loss

struct DetectionLoss {
  double loss = 0.0;
  double objectness_loss = 0.0;
  double regression_loss = 0.0;
  std::size_t positives = 0;
  std::vector<double> d_logit;
  std::vector<std::array<double, 4>> d_deltas;
};

namespace detail {

inline double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

inline double smooth_l1_grad(double x) {
  if (x >= 1.0) return 1.0;
  if (x <= -1.0) return -1.0;
  return x;
}

}  // namespace detail

/// Mean binary cross-entropy on objectness over every proposal plus mean
/// smooth-L1 on the deltas of positive proposals, regressed toward their
/// best-IOU label. The two terms are summed with equal weight.
inline DetectionLoss detection_loss(const std::vector<HeadOutput>& outputs,
                                    const std::vector<Box>& proposals, const ProposalMatch& match,
                                    const std::vector<Box>& labels) {
  if (outputs.empty()) throw std::invalid_argument("detection_loss: no proposals");
  if (outputs.size() != proposals.size() || match.best_label.size() != outputs.size()) {
    throw std::invalid_argument("detection_loss: size mismatch");
  }
  const std::size_t n = outputs.size();
  DetectionLoss out;
  out.d_logit.assign(n, 0.0);
  out.d_deltas.assign(n, {0.0, 0.0, 0.0, 0.0});
  std::vector<bool> positive(n, false);
  for (std::size_t i : match.positive) positive[i] = true;

  const double inv_n = 1.0 / static_cast<double>(n);
  double bce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = outputs[i].objectness;
    const double t = positive[i] ? 1.0 : 0.0;
    bce += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
    const bool clamped = p <= kObjectnessFloor || p >= 1.0 - kObjectnessFloor;
    out.d_logit[i] = clamped ? 0.0 : inv_n * (p - t);
  }
  out.objectness_loss = bce * inv_n;

  out.positives = match.positive.size();
  if (!match.positive.empty()) {
    const double inv_p = 1.0 / static_cast<double>(match.positive.size());
    double reg = 0.0;
    for (std::size_t i : match.positive) {
      const auto target = encode_deltas(proposals[i], labels[match.best_label[i]]);
      for (int k = 0; k < 4; ++k) {
        const double r = outputs[i].deltas[k] - target[k];
        reg += detail::smooth_l1(r);
        out.d_deltas[i][k] = inv_p * detail::smooth_l1_grad(r);
      }
    }
    out.regression_loss = reg * inv_p;
  }
  out.loss = out.objectness_loss + out.regression_loss;
  return out;
}

// ------------------------------------------------------- forward/backward

struct ForwardPass {
  EncoderTrace encoder;
  std::vector<Box> proposals;
  std::vector<RoiFeature> rois;
  std::vector<HeadOutput> outputs;
};

inline ForwardPass forward(const Grid3& image, std::span<const double> params,
                           std::vector<Box> proposals) {
  ForwardPass f;
  f.encoder = encode_trace(image, params);
  f.proposals = std::move(proposals);
  f.rois.reserve(f.proposals.size());
  f.outputs.reserve(f.proposals.size());
  for (const Box& b : f.proposals) {
    f.rois.push_back(roi_pool(f.encoder.output, b));
    f.outputs.push_back(heads_forward(f.rois.back(), params));
  }
  return f;
}

// Upstream gradients for one ForwardPass. `d_flat` may be empty, or hold one
// extra embedding gradient per ROI (contrastive and domain terms); an empty
// entry means zero.
struct RoiGrads {
  std::vector<double> d_logit;
  std::vector<std::array<double, 4>> d_deltas;
  std::vector<Vec> d_flat;

  explicit RoiGrads(std::size_t n = 0)
      : d_logit(n, 0.0), d_deltas(n, {0.0, 0.0, 0.0, 0.0}) {}
};

/// Backpropagates the head gradients times `scale`, plus the unscaled extra
/// embedding gradients, through heads, ROI pooling and the encoder,
/// accumulating into `grads`.
inline void backward(const ForwardPass& f, const RoiGrads& up, double scale,
                     std::span<const double> params, std::span<double> grads) {
  const Grid3& fmap = f.encoder.output;
  Grid3 d_fmap(fmap.channels, fmap.height, fmap.width);
  Vec d_flat(kEmbeddingDim);
  bool any = false;
  for (std::size_t i = 0; i < f.rois.size(); ++i) {
    std::fill(d_flat.begin(), d_flat.end(), 0.0);
    std::array<double, 4> dd{};
    for (int k = 0; k < 4; ++k) dd[k] = scale * up.d_deltas[i][k];
    heads_backward(f.rois[i].flat, scale * up.d_logit[i], dd, params, grads, d_flat);
    if (!up.d_flat.empty() && !up.d_flat[i].empty()) axpy(1.0, up.d_flat[i], d_flat);
    roi_pool_backward(f.rois[i].plan, d_flat, d_fmap);
    any = true;
  }
  if (any) encode_backward(f.encoder, d_fmap, params, grads);
}

// --------------------------------------------------------------- inference

struct InferenceConfig {
  double score_thresh = 0.05;
  double nms_thresh = 0.5;
};

/// encode -> grid proposals -> pool -> heads -> deltas -> clip -> score
/// filter -> NMS.
inline std::vector<Detection> infer(const Grid3& image, std::span<const double> params,
                                    const DetectorConfig& cfg, double score_thresh,
                                    double nms_thresh) {
  const Grid3 fmap = encode(image, params);
  std::vector<Detection> dets;
  for (const Proposal& p : propose(image.width, image.height, cfg)) {
    const HeadOutput h = heads_forward(roi_pool(fmap, p.box), params);
    if (h.objectness < score_thresh) continue;
    auto moved = apply_deltas(p.box, h.deltas);
    if (!moved) continue;
    auto clipped = clip(*moved, image.width, image.height);
    if (!clipped) continue;
    dets.push_back({*clipped, h.objectness});
  }
  return nms(dets, nms_thresh);
}

// -------------------------------------------------------------- checkpoint

// Checkpoint byte layout (all integers and floats little-endian):
//
//   offset  size  field
//   0       8     magic "NODACKPT"
//   8       4     u32 format version (1)
//   12      4     u32 conv kernel size (3)
//   16      4     u32 conv1 channels (8)
//   20      4     u32 conv2 channels (16)
//   24      4     u32 feature stride (4)
//   28      4     u32 ROI pool size (4)
//   32      8     u64 seed
//   40      8     u64 parameter count N
//   48      8N    f64 parameters in Layout order
inline constexpr char kCheckpointMagic[] = "NODACKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t seed = 0;
  ParamVec params;
};

inline std::vector<char> serialize_checkpoint(const Checkpoint& ck) {
  io::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.u32(kKernel);
  w.u32(kConv1Channels);
  w.u32(kConv2Channels);
  w.u32(kStride);
  w.u32(kPoolSize);
  w.u64(ck.seed);
  w.u64(ck.params.size());
  for (double v : ck.params) w.f64(v);
  return w.data();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::ByteWriter w;
  const auto bytes = serialize_checkpoint(ck);
  w.bytes(std::string_view(bytes.data(), bytes.size()));
  w.save(path);
}

inline Checkpoint parse_checkpoint(io::ByteReader r) {
  if (r.bytes(8) != std::string_view(kCheckpointMagic, 8)) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  if (r.u32() != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  const std::uint32_t dims[5] = {r.u32(), r.u32(), r.u32(), r.u32(), r.u32()};
  if (dims[0] != kKernel || dims[1] != kConv1Channels || dims[2] != kConv2Channels ||
      dims[3] != kStride || dims[4] != kPoolSize) {
    throw std::runtime_error("checkpoint: architecture mismatch");
  }
  Checkpoint ck;
  ck.seed = r.u64();
  const std::uint64_t n = r.u64();
  if (n != Layout::kSize) throw std::runtime_error("checkpoint: parameter count mismatch");
  ck.params.resize(n);
  for (double& v : ck.params) v = r.f64();
  if (!r.at_end()) throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::ByteReader::load(path));
}

}  // namespace noda::detector

#endif  // NODA_DETECTOR_HPP_

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
#ifndef NODA_SYNTHDATA_HPP_
#define NODA_SYNTHDATA_HPP_

// Synthetic chest-like radiographs: banded "rib" background plus Gaussian
// blob nodules. Each DomainSpec field controls one axis of domain shift
// (illumination, contrast, noise, resolution via blur, nodule statistics).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fmt/format.h>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "noda/geometry.hpp"
#include "noda/io.hpp"
#include "noda/numerics.hpp"
#include "noda/rng.hpp"

namespace noda::synth {

enum class DomainTag : std::uint32_t { kSource = 0, kTarget = 1 };

inline const char* domain_name(DomainTag t) {
  return t == DomainTag::kSource ? "source" : "target";
}

struct DomainSpec {
  int image_size = 128;
  double band_period = 24.0;  // px
  double band_amplitude = 0.25;
  double brightness = 0.1;
  double contrast = 0.8;
  double noise_sigma = 0.005;
  int blur_radius = 0;  // px, box blur half-width
  int nodule_count_min = 1;
  int nodule_count_max = 2;
  double nodule_radius_min = 8.0;  // px; radius = 2 sigma of the blob
  double nodule_radius_max = 16.0;
  double nodule_peak_min = 0.35;
  double nodule_peak_max = 0.5;

  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
      throw std::invalid_argument(field + ": " + why);
    };
    if (image_size < 16 || image_size % 4 != 0) fail("image_size", "must be a multiple of 4, >= 16");
    if (!(band_period > 0.0)) fail("band_period", "must be > 0");
    if (!(band_amplitude >= 0.0 && band_amplitude <= 0.5)) fail("band_amplitude", "must be in [0, 0.5]");
    if (!(brightness >= 0.0 && brightness <= 1.0)) fail("brightness", "must be in [0, 1]");
    if (!(contrast >= 0.0 && contrast <= 1.0)) fail("contrast", "must be in [0, 1]");
    if (!(noise_sigma >= 0.0 && noise_sigma <= 0.5)) fail("noise_sigma", "must be in [0, 0.5]");
    if (blur_radius < 0 || blur_radius > 8) fail("blur_radius", "must be in [0, 8]");
    if (nodule_count_min < 0 || nodule_count_max < nodule_count_min) {
      fail("nodule_count_max", "count range must be nonempty and >= 0");
    }
    if (!(nodule_radius_min >= 2.0) || nodule_radius_max < nodule_radius_min) {
      fail("nodule_radius_max", "radius range must be nonempty with min >= 2");
    }
    if (2.0 * nodule_radius_max >= image_size) fail("nodule_radius_max", "nodule larger than image");
    if (!(nodule_peak_min >= 0.0) || nodule_peak_max < nodule_peak_min || nodule_peak_max > 1.0) {
      fail("nodule_peak_max", "peak range must be a nonempty subrange of [0, 1]");
    }
  }
};

// Bundled benchmark. The target differs from the source in contrast,
// brightness, noise, blur, band period and nodule count/size/peak.
inline DomainSpec source_domain() { return DomainSpec{}; }

inline DomainSpec target_domain() {
  DomainSpec d;
  d.band_period = 18.0;
  d.band_amplitude = 0.45;
  d.brightness = 0.3;
  d.contrast = 0.6;
  d.noise_sigma = 0.03;
  d.blur_radius = 1;
  d.nodule_count_min = 1;
  d.nodule_count_max = 4;
  d.nodule_radius_min = 6.0;
  d.nodule_radius_max = 14.0;
  d.nodule_peak_min = 0.2;
  d.nodule_peak_max = 0.35;
  return d;
}

struct Nodule {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  double peak = 0.0;

  Box box() const { return Box(cx - radius, cy - radius, cx + radius, cy + radius); }
};

struct SynthSample {
  Grid3 image;  // 1 x H x W, intensities in [0, 1]
  std::vector<Box> gt_boxes;
  DomainTag domain = DomainTag::kSource;

  bool operator==(const SynthSample&) const = default;
};

// Intermediate stages, exposed for tests.
struct RenderTrace {
  Grid3 background;
  Grid3 clean;  // background + blobs, blurred, before noise and clipping
  std::vector<Nodule> nodules;
  int requested = 0;
};

namespace detail {

inline Grid3 box_blur(const Grid3& in, int r) {
  if (r <= 0) return in;
  const int h = in.height;
  const int w = in.width;
  Grid3 tmp(1, h, w), out(1, h, w);
  const double inv = 1.0 / (2 * r + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += in.at(0, y, std::clamp(x + k, 0, w - 1));
      tmp.at(0, y, x) = s * inv;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += tmp.at(0, std::clamp(y + k, 0, h - 1), x);
      out.at(0, y, x) = s * inv;
    }
  }
  return out;
}

}  // namespace detail

/// Renders one sample and returns all intermediate stages. The rng draw order
/// is: band phase, band tilt, nodule count, then per nodule attempt
/// (radius, cx, cy, peak), then the noise field in raster order.
inline RenderTrace render_trace(const DomainSpec& spec, Rng& rng) {
  spec.validate();
  const int n = spec.image_size;
  RenderTrace t;
  t.background = Grid3(1, n, n);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double tilt = rng.uniform(-0.2, 0.2);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double band =
          std::sin(2.0 * std::numbers::pi * (y + tilt * x) / spec.band_period + phase);
      t.background.at(0, y, x) =
          spec.brightness + spec.contrast * (0.5 + spec.band_amplitude * band);
    }
  }

  t.requested = rng.uniform_int(spec.nodule_count_min, spec.nodule_count_max);
  constexpr int kMaxRetries = 100;
  for (int k = 0; k < t.requested; ++k) {
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
      Nodule nd;
      nd.radius = rng.uniform(spec.nodule_radius_min, spec.nodule_radius_max);
      nd.cx = rng.uniform(nd.radius, n - nd.radius);
      nd.cy = rng.uniform(nd.radius, n - nd.radius);
      nd.peak = rng.uniform(spec.nodule_peak_min, spec.nodule_peak_max);
      const Box b = nd.box();
      const bool clear = std::all_of(t.nodules.begin(), t.nodules.end(),
                                     [&](const Nodule& o) { return iou(b, o.box()) <= 0.2; });
      if (clear) {
        t.nodules.push_back(nd);
        break;
      }
    }
  }

  Grid3 img = t.background;
  for (const Nodule& nd : t.nodules) {
    const double sigma = 0.5 * nd.radius;
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const int y0 = std::max(0, static_cast<int>(nd.cy - 4 * sigma));
    const int y1 = std::min(n - 1, static_cast<int>(nd.cy + 4 * sigma) + 1);
    const int x0 = std::max(0, static_cast<int>(nd.cx - 4 * sigma));
    const int x1 = std::min(n - 1, static_cast<int>(nd.cx + 4 * sigma) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - nd.cx;
        const double dy = y + 0.5 - nd.cy;
        img.at(0, y, x) += nd.peak * std::exp(-(dx * dx + dy * dy) * inv2s2);
      }
    }
  }
  t.clean = detail::box_blur(img, spec.blur_radius);
  return t;
}

inline SynthSample finish_sample(const RenderTrace& t, const DomainSpec& spec, Rng& rng,
                                 DomainTag tag) {
  SynthSample s;
  s.domain = tag;
  s.image = t.clean;
  for (double& v : s.image.values) {
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
  }
  for (const Nodule& nd : t.nodules) s.gt_boxes.push_back(nd.box());
  return s;
}

inline SynthSample render_sample(const DomainSpec& spec, Rng& rng,
                                 DomainTag tag = DomainTag::kSource) {
  const RenderTrace t = render_trace(spec, rng);
  return finish_sample(t, spec, rng, tag);
}

/// Sample i is rendered from Rng(seed).split(i), so every sample is
/// independent of how many others were generated.
inline SynthSample make_sample(const DomainSpec& spec, std::uint64_t seed, std::size_t index,
                               DomainTag tag) {
  Rng rng = Rng(seed).split(index);
  return render_sample(spec, rng, tag);
}

inline std::vector<SynthSample> make_dataset(const DomainSpec& spec, std::size_t n,
                                             std::uint64_t seed,
                                             DomainTag tag = DomainTag::kSource) {
  if (n < 1) throw std::invalid_argument("make_dataset: n must be >= 1");
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_sample(spec, seed, i, tag));
  return out;
}

// ------------------------------------------------------------- file format
//
// A dataset is a directory holding:
//   index.txt             "noda-dataset 1", then "count N", "domain <tag>",
//                         then one "sample_%05d <num boxes>" line per sample
//   sample_%05d.bin       magic "NODAIMG1", u32 version (1), u32 C, u32 H,
//                         u32 W, u32 domain tag (0 source, 1 target), then
//                         C*H*W f64 values, channel-major; little-endian
//   sample_%05d.boxes.txt one "x_min y_min x_max y_max" line per box, each
//                         value printed with 17 significant digits

inline constexpr char kImageMagic[] = "NODAIMG1";

inline std::string sample_stem(std::size_t i) { return fmt::format("sample_{:05d}", i); }

inline std::vector<char> serialize_image(const SynthSample& s) {
  io::ByteWriter w;
  w.bytes(std::string_view(kImageMagic, 8));
  w.u32(1);
  w.u32(s.image.channels);
  w.u32(s.image.height);
  w.u32(s.image.width);
  w.u32(static_cast<std::uint32_t>(s.domain));
  for (double v : s.image.values) w.f64(v);
  return w.data();
}

inline std::string serialize_boxes(const std::vector<Box>& boxes) {
  std::string out;
  for (const Box& b : boxes) {
    out += fmt::format("{:.17g} {:.17g} {:.17g} {:.17g}\n", b.x_min, b.y_min, b.x_max, b.y_max);
  }
  return out;
}

inline std::vector<Box> parse_boxes(const std::string& text) {
  std::vector<Box> boxes;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double v[4];
    if (!(ls >> v[0] >> v[1] >> v[2] >> v[3])) {
      throw std::runtime_error("malformed box line: " + line);
    }
    boxes.emplace_back(v[0], v[1], v[2], v[3]);
  }
  return boxes;
}

inline void save_dataset(const std::filesystem::path& dir, const std::vector<SynthSample>& data) {
  std::filesystem::create_directories(dir);
  std::string index = "noda-dataset 1\n";
  index += fmt::format("count {}\n", data.size());
  index += fmt::format("domain {}\n", data.empty() ? "source" : domain_name(data.front().domain));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string stem = sample_stem(i);
    io::ByteWriter w;
    const auto bytes = serialize_image(data[i]);
    w.bytes(std::string_view(bytes.data(), bytes.size()));
    w.save(dir / (stem + ".bin"));
    io::write_text(dir / (stem + ".boxes.txt"), serialize_boxes(data[i].gt_boxes));
    index += fmt::format("{} {}\n", stem, data[i].gt_boxes.size());
  }
  io::write_text(dir / "index.txt", index);
}

inline SynthSample load_sample(const std::filesystem::path& dir, const std::string& stem) {
  io::ByteReader r = io::ByteReader::load(dir / (stem + ".bin"));
  if (r.bytes(8) != std::string_view(kImageMagic, 8)) {
    throw std::runtime_error("dataset: bad image magic in " + stem);
  }
  if (r.u32() != 1) throw std::runtime_error("dataset: unsupported image version");
  const int c = static_cast<int>(r.u32());
  const int h = static_cast<int>(r.u32());
  const int w = static_cast<int>(r.u32());
  const std::uint32_t tag = r.u32();
  if (tag > 1) throw std::runtime_error("dataset: bad domain tag");
  SynthSample s;
  s.domain = static_cast<DomainTag>(tag);
  s.image = Grid3(c, h, w);
  for (double& v : s.image.values) v = r.f64();
  if (!r.at_end()) throw std::runtime_error("dataset: trailing bytes in " + stem);
  s.gt_boxes = parse_boxes(io::read_text(dir / (stem + ".boxes.txt")));
  return s;
}

inline std::vector<SynthSample> load_dataset(const std::filesystem::path& dir) {
  std::istringstream in(io::read_text(dir / "index.txt"));
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "noda-dataset" || version != 1) {
    throw std::runtime_error("dataset: bad index header in " + dir.string());
  }
  std::string key, domain;
  std::size_t count = 0;
  in >> key >> count;
  if (key != "count") throw std::runtime_error("dataset: expected count");
  in >> key >> domain;
  if (key != "domain") throw std::runtime_error("dataset: expected domain");
  std::vector<SynthSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string stem;
    std::size_t nboxes = 0;
    if (!(in >> stem >> nboxes)) throw std::runtime_error("dataset: truncated index");
    out.push_back(load_sample(dir, stem));
    if (out.back().gt_boxes.size() != nboxes) {
      throw std::runtime_error("dataset: box count mismatch for " + stem);
    }
  }
  return out;
}

}  // namespace noda::synth

#endif  // NODA_SYNTHDATA_HPP_

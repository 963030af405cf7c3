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
#ifndef NODA_CONFIG_HPP_
#define NODA_CONFIG_HPP_

// Run configuration. Text form is flat `key = value` lines grouped under
// `[section]` headers; JSON ({"section": {"key": value}}) is accepted too.
// Resolution order: built-in defaults, then the config file, then `--set`
// overrides. A key may be written bare when its name is unique across
// sections; `lambda` and `contrastive.lambda` are the same key.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <fmt/format.h>

#include <nlohmann/json.hpp>
#include "noda/io.hpp"
#include "noda/mean_teacher.hpp"
#include "noda/synthdata.hpp"

namespace noda::config {

inline constexpr const char* kRunFormat = "noda-run 1";

// Bad keys, bad values and failed validation. The CLI maps this to exit 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int samples = 200;  // synth-gen dataset size
  mean_teacher::AdaptConfig adapt;
  synth::DomainSpec source = synth::source_domain();
  synth::DomainSpec target = synth::target_domain();
  mean_teacher::EvalConfig eval;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError(fmt::format("{}: empty list", key));
  return out;
}

inline std::string format_double(double v) { return fmt::format("{}", v); }

}  // namespace detail

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;

  std::string qualified() const { return section + "." + key; }
};

namespace detail {

inline Field real(std::string sec, std::string key, double& v) {
  const std::string name = key;
  return {std::move(sec), std::move(key),
          [&v, name](const std::string& t) { v = parse_number<double>(name, t); },
          [&v] { return format_double(v); }};
}

template <typename I>
Field integer(std::string sec, std::string key, I& v) {
  const std::string name = key;
  return {std::move(sec), std::move(key),
          [&v, name](const std::string& t) { v = parse_number<I>(name, t); },
          [&v] { return std::to_string(v); }};
}

inline Field boolean(std::string sec, std::string key, bool& v) {
  const std::string name = key;
  return {std::move(sec), std::move(key),
          [&v, name](const std::string& t) { v = parse_bool(name, t); },
          [&v] { return std::string(v ? "true" : "false"); }};
}

inline Field int_list(std::string sec, std::string key, std::vector<int>& v) {
  const std::string name = key;
  return {std::move(sec), std::move(key),
          [&v, name](const std::string& t) { v = parse_int_list(name, t); },
          [&v] {
            std::string out;
            for (std::size_t i = 0; i < v.size(); ++i) {
              out += (i ? "," : "") + std::to_string(v[i]);
            }
            return out;
          }};
}

inline void domain_fields(std::vector<Field>& f, const std::string& sec, synth::DomainSpec& d) {
  f.push_back(integer(sec, "image_size", d.image_size));
  f.push_back(real(sec, "band_period", d.band_period));
  f.push_back(real(sec, "band_amplitude", d.band_amplitude));
  f.push_back(real(sec, "brightness", d.brightness));
  f.push_back(real(sec, "contrast", d.contrast));
  f.push_back(real(sec, "noise_sigma", d.noise_sigma));
  f.push_back(integer(sec, "blur_radius", d.blur_radius));
  f.push_back(integer(sec, "nodule_count_min", d.nodule_count_min));
  f.push_back(integer(sec, "nodule_count_max", d.nodule_count_max));
  f.push_back(real(sec, "nodule_radius_min", d.nodule_radius_min));
  f.push_back(real(sec, "nodule_radius_max", d.nodule_radius_max));
  f.push_back(real(sec, "nodule_peak_min", d.nodule_peak_min));
  f.push_back(real(sec, "nodule_peak_max", d.nodule_peak_max));
}

}  // namespace detail

/// Every configurable field, bound to `c`, in canonical output order.
inline std::vector<Field> fields(RunConfig& c) {
  using namespace detail;
  std::vector<Field> f;
  f.push_back(integer("run", "seed", c.seed));
  f.push_back(integer("run", "samples", c.samples));

  auto& a = c.adapt;
  f.push_back(real("adapt", "beta", a.beta));
  f.push_back(real("adapt", "conf_thresh", a.conf_thresh));
  f.push_back(real("adapt", "pseudo_nms_thresh", a.pseudo_nms_thresh));
  f.push_back(real("adapt", "roi_thresh", a.roi_thresh));
  f.push_back(integer("adapt", "iters_pretrain", a.iters_pretrain));
  f.push_back(integer("adapt", "iters_adapt", a.iters_adapt));
  f.push_back(real("adapt", "lr", a.lr));
  f.push_back(integer("adapt", "batch", a.batch));
  f.push_back(real("adapt", "w_det_src", a.w_det_src));
  f.push_back(real("adapt", "w_det_tgt", a.w_det_tgt));
  f.push_back(real("adapt", "w_contrs", a.w_contrs));
  f.push_back(real("adapt", "w_cls", a.w_cls));
  f.push_back(real("adapt", "gamma", a.gamma));
  f.push_back(boolean("adapt", "contrast_source", a.contrast_source));
  f.push_back(integer("adapt", "max_contrast_positives", a.max_contrast_positives));
  f.push_back(integer("adapt", "max_contrast_negatives", a.max_contrast_negatives));
  f.push_back(integer("adapt", "rois_per_image", a.rois_per_image));
  f.push_back(real("adapt", "positive_fraction", a.positive_fraction));
  f.push_back(real("adapt", "near_negative_fraction", a.near_negative_fraction));

  auto& k = a.contrastive;
  f.push_back(real("contrastive", "lambda", k.lambda));
  f.push_back(real("contrastive", "mu", k.mu));
  f.push_back(real("contrastive", "sim_clamp_eps", k.sim_clamp_eps));
  f.push_back(integer("contrastive", "p", k.p));
  f.push_back(integer("contrastive", "q", k.q));

  auto& d = a.detector;
  f.push_back(integer("detector", "grid_stride", d.grid_stride));
  f.push_back(int_list("detector", "scales", d.scales));
  f.push_back(real("detector", "jitter", d.jitter));
  f.push_back(integer("detector", "jitter_copies", d.jitter_copies));
  f.push_back(real("detector", "conv1_init", d.conv1_init));
  f.push_back(real("detector", "conv2_init", d.conv2_init));
  f.push_back(real("detector", "init_scale", d.init_scale));

  domain_fields(f, "source", c.source);
  domain_fields(f, "target", c.target);

  f.push_back(real("eval", "score_thresh", c.eval.score_thresh));
  f.push_back(real("eval", "nms_thresh", c.eval.nms_thresh));
  return f;
}

inline void validate(const RunConfig& c) {
  try {
    if (c.samples < 1) throw std::invalid_argument("samples: must be >= 1");
    c.adapt.validate();
    c.source.validate();
    c.target.validate();
    if (!(c.eval.score_thresh >= 0.0 && c.eval.score_thresh <= 1.0)) {
      throw std::invalid_argument("score_thresh: must be in [0, 1]");
    }
    if (!(c.eval.nms_thresh > 0.0 && c.eval.nms_thresh <= 1.0)) {
      throw std::invalid_argument("nms_thresh: must be in (0, 1]");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Sets one key (bare or `section.key`) from its text form.
inline void set_value(RunConfig& c, const std::string& name, const std::string& value,
                      const std::string& section = {}) {
  std::string sec = section;
  std::string key = name;
  if (const auto dot = name.find('.'); dot != std::string::npos) {
    sec = name.substr(0, dot);
    key = name.substr(dot + 1);
  }
  auto all = fields(c);
  std::vector<Field*> hits;
  for (Field& f : all) {
    if (f.key == key && (sec.empty() || f.section == sec)) hits.push_back(&f);
  }
  if (hits.empty()) {
    throw ConfigError(fmt::format("unknown key '{}'", sec.empty() ? key : sec + "." + key));
  }
  if (hits.size() > 1) {
    throw ConfigError(
        fmt::format("ambiguous key '{}': qualify it, e.g. '{}'", key, hits[0]->qualified()));
  }
  hits[0]->set(detail::trim(value));
}

inline void apply_text(RunConfig& c, const std::string& text) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(fmt::format("line {}: malformed section", lineno));
      section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected key = value", lineno));
    }
    set_value(c, detail::trim(std::string_view(t).substr(0, eq)),
              detail::trim(std::string_view(t).substr(eq + 1)), section);
  }
}

inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config json: top level must be an object");
  auto text_of = [](const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_array()) {
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i].dump();
      return out;
    }
    if (v.is_number_float()) return detail::format_double(v.get<double>());
    return v.dump();
  };
  for (const auto& [sec, body] : j.items()) {
    if (body.is_object()) {
      for (const auto& [key, v] : body.items()) set_value(c, key, text_of(v), sec);
    } else {
      set_value(c, sec, text_of(body));
    }
  }
}

inline void apply_file(RunConfig& c, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError(fmt::format("config file not found: {}", path.string()));
  }
  const std::string text = io::read_text(path);
  if (path.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
    apply_json(c, j);
  } else {
    apply_text(c, text);
  }
}

/// `key=value` override, as given to --set.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(fmt::format("override '{}': expected key=value", assignment));
  }
  set_value(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Defaults, then `file` (if given), then `overrides` in order; validated.
inline RunConfig resolve(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::string>& overrides, RunConfig base = {}) {
  RunConfig c = std::move(base);
  if (file) apply_file(c, *file);
  for (const auto& o : overrides) apply_override(c, o);
  validate(c);
  return c;
}

inline std::string to_text(RunConfig c) {
  std::string out = fmt::format("# {}\n", kRunFormat);
  std::string section;
  for (const Field& f : fields(c)) {
    if (f.section != section) {
      section = f.section;
      out += fmt::format("\n[{}]\n", section);
    }
    out += fmt::format("{} = {}\n", f.key, f.get());
  }
  return out;
}

/// Writes config.ini (resolved config, seed included) and VERSION.
inline void echo_to_run_dir(const RunConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_text(dir / "config.ini", to_text(c));
  io::write_text(dir / "VERSION", std::string(kRunFormat) + "\n");
}

/// Desk-scale benchmark: finer proposal grid, short schedule, small batch,
/// EMA rate matched to the shorter adaptation phase.
inline RunConfig benchmark_config() {
  RunConfig c;
  c.adapt.iters_pretrain = 200;
  c.adapt.iters_adapt = 800;
  c.adapt.batch = 4;
  c.adapt.beta = 0.996;
  c.adapt.detector.grid_stride = 8;
  c.adapt.detector.scales = {16, 24, 32};
  c.eval.score_thresh = 0.0;
  return c;
}

}  // namespace noda::config

#endif  // NODA_CONFIG_HPP_

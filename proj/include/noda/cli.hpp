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
#ifndef NODA_CLI_HPP_
#define NODA_CLI_HPP_

// `noda` command line: synth-gen, pretrain, adapt, eval, gradcheck, report.
// Exit codes: 0 success, 1 validation failure (bad config, bad flags, failed
// gradient check), 2 runtime failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include "noda/config.hpp"
#include "noda/detector.hpp"
#include "noda/eval.hpp"
#include "noda/gradcheck.hpp"
#include "noda/io.hpp"
#include "noda/mean_teacher.hpp"
#include "noda/synthdata.hpp"

namespace noda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

namespace fs = std::filesystem;

// ------------------------------------------------------------------ report

struct LabelledReport {
  std::string label;
  eval::MetricsReport report;
};

inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct TableRow {
  std::string label;
  std::size_t runs = 0;
  std::array<std::optional<double>, 6> medians{};  // kReportFields order
};

inline const std::vector<std::string>& ablation_order() {
  static const std::vector<std::string> order = {"baseline", "+region", "+region+pixel", "full"};
  return order;
}

/// Medians per label. The four ablation rows always come first, in order,
/// even when they have no runs; any other labels follow alphabetically.
inline std::vector<TableRow> aggregate(const std::vector<LabelledReport>& reports) {
  std::map<std::string, std::vector<const eval::MetricsReport*>> by_label;
  for (const auto& r : reports) by_label[r.label].push_back(&r.report);
  std::vector<std::string> labels = ablation_order();
  for (const auto& [label, _] : by_label) {
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
  }
  std::vector<TableRow> rows;
  for (const auto& label : labels) {
    TableRow row{label};
    const auto it = by_label.find(label);
    if (it != by_label.end()) {
      row.runs = it->second.size();
      for (std::size_t f = 0; f < row.medians.size(); ++f) {
        std::vector<double> vals;
        for (const auto* r : it->second) {
          if (const auto v = eval::report_values(*r)[f]) vals.push_back(*v);
        }
        row.medians[f] = median(vals);
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string format_table(const std::vector<TableRow>& rows) {
  std::string out = fmt::format("{:<16} {:>4}", "config", "runs");
  for (const char* f : eval::kReportFields) out += fmt::format(" {:>7}", f);
  out += '\n';
  for (const auto& row : rows) {
    out += fmt::format("{:<16} {:>4}", row.label, row.runs);
    for (const auto& m : row.medians) {
      out += m ? fmt::format(" {:>7.2f}", 100.0 * *m) : fmt::format(" {:>7}", "-");
    }
    out += '\n';
  }
  return out;
}

inline std::string table_csv(const std::vector<TableRow>& rows) {
  std::string out = "label,runs," + eval::csv_header() + "\n";
  for (const auto& row : rows) {
    out += fmt::format("{},{}", row.label, row.runs);
    for (const auto& m : row.medians) out += m ? fmt::format(",{:.17g}", *m) : std::string(",");
    out += '\n';
  }
  return out;
}

inline LabelledReport read_labelled(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "metrics.json" : path;
  const auto j = nlohmann::json::parse(io::read_text(file));
  return {j.value("label", std::string("unlabelled")), eval::report_from_json(j)};
}

// ---------------------------------------------------------------- commands

struct Options {
  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

inline config::RunConfig resolve(const Options& o) {
  std::vector<std::string> sets = o.overrides;
  if (o.seed) sets.push_back(fmt::format("seed={}", *o.seed));
  std::optional<fs::path> file;
  if (o.config_file) file = *o.config_file;
  return config::resolve(file, sets);
}

inline void write_checkpoint(const fs::path& path, std::uint64_t seed, const ParamVec& params) {
  detector::save_checkpoint(path, detector::Checkpoint{seed, params});
}

inline int synth_gen(const config::RunConfig& c, const fs::path& out, const std::string& domain) {
  const bool target = domain == "target";
  const auto tag = target ? synth::DomainTag::kTarget : synth::DomainTag::kSource;
  const auto data = synth::make_dataset(target ? c.target : c.source,
                                        static_cast<std::size_t>(c.samples), c.seed, tag);
  synth::save_dataset(out, data);
  config::echo_to_run_dir(c, out);
  fmt::print("wrote {} {} samples to {}\n", data.size(), domain, out.string());
  return kExitOk;
}

inline int pretrain(const config::RunConfig& c, const fs::path& source, const fs::path& out) {
  const auto src = synth::load_dataset(source);
  config::echo_to_run_dir(c, out);
  const auto run = mean_teacher::run_pretrain(src, c.adapt, c.seed);
  write_checkpoint(out / "model.ckpt", c.seed, run.params);
  io::write_text(out / "pretrain_log.csv", run.log.to_csv());
  if (!run.log.rows.empty()) {
    fmt::print("pretrain: {} iterations, det loss {:.4f} -> {:.4f}\n", run.log.rows.size(),
               run.log.rows.front().losses.det_src, run.log.rows.back().losses.det_src);
  }
  return kExitOk;
}

inline int adapt(const config::RunConfig& c, const fs::path& source, const fs::path& target,
                 const std::optional<std::string>& init, const fs::path& out) {
  const auto src = synth::load_dataset(source);
  const auto tgt = synth::load_dataset(target);
  config::echo_to_run_dir(c, out);
  ParamVec pretrained;
  if (init) {
    pretrained = detector::load_checkpoint(*init).params;
  } else {
    const auto run = mean_teacher::run_pretrain(src, c.adapt, c.seed);
    pretrained = run.params;
    write_checkpoint(out / "model.ckpt", c.seed, run.params);
    io::write_text(out / "pretrain_log.csv", run.log.to_csv());
  }
  const auto run = mean_teacher::run_adapt(pretrained, src, tgt, c.adapt, c.seed);
  write_checkpoint(out / "teacher.ckpt", c.seed, run.state.teacher);
  write_checkpoint(out / "student.ckpt", c.seed, run.state.student);
  io::write_text(out / "adapt_log.csv", run.log.to_csv());
  fmt::print("adapt: {} iterations written to {}\n", run.log.rows.size(), out.string());
  return kExitOk;
}

inline int evaluate(const config::RunConfig& c, const fs::path& ckpt, const fs::path& data,
                    const fs::path& out, const std::string& label) {
  const auto params = detector::load_checkpoint(ckpt).params;
  const auto samples = synth::load_dataset(data);
  const auto report = mean_teacher::evaluate(params, samples, c.adapt.detector, c.eval);
  config::echo_to_run_dir(c, out);
  auto j = eval::report_to_json(report);
  j["label"] = label;
  io::write_text(out / "metrics.json", j.dump(2) + "\n");
  io::write_text(out / "metrics.csv", eval::csv_header() + "\n" + eval::csv_row(report) + "\n");
  fmt::print("{}\n{}\n", eval::csv_header(), eval::csv_row(report));
  return kExitOk;
}

inline int gradcheck(int cases, std::uint64_t seed) {
  bool ok = true;
  double total = 0.0;
  for (const auto& s : gradcheck::suites()) {
    const auto r = gradcheck::run_suite(s, cases, seed);
    total += r.seconds;
    ok = ok && r.passed();
    fmt::print("{:<18} cases {:>5}  max rel err {:.3e}  {:>6.2f}s  {}\n", r.name, r.cases,
               r.max_rel_err, r.seconds, r.passed() ? "ok" : "FAIL");
  }
  fmt::print("total {:.2f}s, tolerance {:g}\n", total, gradcheck::kTolerance);
  return ok ? kExitOk : kExitValidation;
}

inline int report(const std::vector<std::string>& inputs, const std::optional<std::string>& out) {
  std::vector<LabelledReport> reports;
  for (const auto& p : inputs) reports.push_back(read_labelled(p));
  const auto rows = aggregate(reports);
  fmt::print("median over runs, AP in percent\n{}", format_table(rows));
  if (out) io::write_text(*out, table_csv(rows));
  return kExitOk;
}

inline void add_config_options(CLI::App* cmd, Options& o) {
  cmd->add_option("-c,--config", o.config_file, "config file (.ini-style or .json)");
  cmd->add_option("-s,--set", o.overrides, "override, key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "top-level seed (same as --set seed=N)");
}

/// Parses argv and runs one command; returns the process exit code.
inline int run(int argc, char** argv) {
  CLI::App app{"noda: domain-adaptive nodule detection on a synthetic benchmark"};
  app.require_subcommand(1);

  Options opt;
  std::string out, source, target, data, ckpt, domain = "source", label = "unlabelled";
  std::optional<std::string> init, report_out;
  std::vector<std::string> inputs;
  int cases = gradcheck::kDefaultCases;
  std::uint64_t gc_seed = 0;

  auto* gen = app.add_subcommand("synth-gen", "write a synthetic dataset");
  add_config_options(gen, opt);
  gen->add_option("-o,--out", out, "output directory")->required();
  gen->add_option("--domain", domain, "source or target")
      ->check(CLI::IsMember({"source", "target"}));

  auto* pre = app.add_subcommand("pretrain", "supervised source training");
  add_config_options(pre, opt);
  pre->add_option("--source", source, "source dataset directory")->required();
  pre->add_option("-o,--out", out, "run directory")->required();

  auto* ad = app.add_subcommand("adapt", "mean-teacher adaptation");
  add_config_options(ad, opt);
  ad->add_option("--source", source, "source dataset directory")->required();
  ad->add_option("--target", target, "target dataset directory")->required();
  ad->add_option("--init", init, "pretrained checkpoint (pretrains first when omitted)");
  ad->add_option("-o,--out", out, "run directory")->required();

  auto* ev = app.add_subcommand("eval", "COCO-style metrics for a checkpoint");
  add_config_options(ev, opt);
  ev->add_option("--ckpt", ckpt, "checkpoint file")->required();
  ev->add_option("--data", data, "dataset directory")->required();
  ev->add_option("-o,--out", out, "output directory")->required();
  ev->add_option("--label", label, "label recorded in metrics.json");

  auto* gc = app.add_subcommand("gradcheck", "run every finite-difference suite");
  gc->add_option("--cases", cases, "cases per suite")->check(CLI::PositiveNumber);
  gc->add_option("--seed", gc_seed, "seed");

  auto* rep = app.add_subcommand("report", "median table over labelled eval outputs");
  rep->add_option("inputs", inputs, "metrics.json files or eval directories")->required();
  rep->add_option("-o,--out", report_out, "also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*gc) return gradcheck(cases, gc_seed);
    if (*rep) return report(inputs, report_out);
    const config::RunConfig c = resolve(opt);
    if (*gen) return synth_gen(c, out, domain);
    if (*pre) return pretrain(c, source, out);
    if (*ad) return adapt(c, source, target, init, out);
    if (*ev) return evaluate(c, ckpt, data, out, label);
  } catch (const config::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace noda::cli

#endif  // NODA_CLI_HPP_

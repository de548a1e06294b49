// Copyright 2026 The fusemerge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fusemerge/error.hpp"
#include "fusemerge/noise_generator.hpp"
#include "fusemerge/prompt.hpp"
#include "fusemerge/reasoner.hpp"

namespace fusemerge {

inline constexpr std::string_view kMetricName = "five-slot exact match";
inline constexpr std::array<Slot, 5> kAllSlots{Slot::ap, Slot::a, Slot::to1, Slot::p, Slot::to2};

struct EvalRow {
  std::uint64_t sample_id = 0;
  std::string backend;
  double noise_level = 0.0;
  bool exact_match = false;
  std::array<bool, 5> slot_correct{};  // ap, a, to1, p, to2
  double latency_s = 0.0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct EvalAggregate {
  std::string backend;
  double noise_level = 0.0;
  std::size_t n = 0;
  double accuracy = 0.0;
  std::array<double, 5> slot_accuracy{};

  friend bool operator==(const EvalAggregate&, const EvalAggregate&) = default;
};

struct EvalReport {
  std::vector<EvalRow> rows;              // sorted by (backend, noise_level, sample_id)
  std::vector<EvalAggregate> aggregates;  // one per (backend, noise_level)

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Per-slot comparison of a decoded command against the truth. A missing
/// command matches nothing.
inline std::array<bool, 5> compare_slots(const std::optional<SkillCommand>& got,
                                         const SkillCommand& truth) {
  if (!got) return {};
  return {got->ap == truth.ap, got->a == truth.a, got->to1 == truth.to1, got->p == truth.p,
          got->to2 == truth.to2};
}

/// Sorts rows and recomputes every aggregate from them.
inline EvalReport make_report(std::vector<EvalRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const EvalRow& x, const EvalRow& y) {
    return std::tie(x.backend, x.noise_level, x.sample_id) <
           std::tie(y.backend, y.noise_level, y.sample_id);
  });
  EvalReport rep;
  for (std::size_t i = 0; i < rows.size();) {
    std::size_t j = i;
    std::size_t hits = 0;
    std::array<std::size_t, 5> slot_hits{};
    while (j < rows.size() && rows[j].backend == rows[i].backend &&
           rows[j].noise_level == rows[i].noise_level) {
      hits += rows[j].exact_match;
      for (std::size_t k = 0; k < 5; ++k) slot_hits[k] += rows[j].slot_correct[k];
      ++j;
    }
    EvalAggregate a;
    a.backend = rows[i].backend;
    a.noise_level = rows[i].noise_level;
    a.n = j - i;
    a.accuracy = static_cast<double>(hits) / static_cast<double>(a.n);
    for (std::size_t k = 0; k < 5; ++k) {
      a.slot_accuracy[k] = static_cast<double>(slot_hits[k]) / static_cast<double>(a.n);
    }
    rep.aggregates.push_back(std::move(a));
    i = j;
  }
  rep.rows = std::move(rows);
  return rep;
}

/// Which input channels reach the pipeline.
enum class Channels { both, voice_only, gesture_only };

using ContextBuilder = std::function<PromptContext(const Scene&, const ActionRegistry&)>;

struct EvalOptions {
  std::size_t jobs = 1;                   // worker threads; 0 uses every core
  std::optional<ActionRegistry> registry;  // default: the sample scenario's registry
  ContextBuilder context = make_prompt_context;
  Channels channels = Channels::both;
  std::optional<double> noise_level;  // row label; default: largest noise parameter
};

namespace detail {

inline double nominal_level(const NoiseParams& p) {
  return std::max({p.phonetic, p.filler, p.truncation, p.align});
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
// stops further work and is rethrown on the caller's thread.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Runs the pipeline on every sample. A command with violations counts as
/// a miss on every slot. Rows come back sorted whatever the thread count.
inline EvalReport evaluate_dataset(std::span<const DatasetSample> dataset, const Backend& backend,
                                   const EvalOptions& opt = {}) {
  if (dataset.empty()) throw Error(ErrorKind::usage, "cannot evaluate an empty dataset");
  const ModalitySentence no_gesture(Modality::gesture), no_voice(Modality::voice);
  std::vector<EvalRow> rows(dataset.size());
  detail::parallel_for(dataset.size(), opt.jobs, [&](std::size_t i) {
    const auto& s = dataset[i];
    const ActionRegistry registry = opt.registry ? *opt.registry : registry_for(s.scenario);
    const auto ctx = opt.context(s.scene, registry);
    const auto& g = opt.channels == Channels::voice_only ? no_gesture : s.gesture;
    const auto& v = opt.channels == Channels::gesture_only ? no_voice : s.voice;
    EvalRow row;
    row.sample_id = s.sample_id;
    row.backend = to_string(backend.kind());
    row.noise_level = opt.noise_level.value_or(detail::nominal_level(s.params));
    if (g.empty() && v.empty()) {
      row.slot_correct = {};
    } else {
      const auto r = run_pipeline(backend, g, v, s.scene, registry, ctx, s.ground_truth);
      row.slot_correct = compare_slots(r.command, s.ground_truth);
      row.latency_s = r.latency.count();
    }
    row.exact_match = std::all_of(row.slot_correct.begin(), row.slot_correct.end(),
                                  [](bool b) { return b; });
    rows[i] = std::move(row);
  });
  return make_report(std::move(rows));
}

enum class SweepMode { combined, align };

inline const char* to_string(SweepMode m) { return m == SweepMode::combined ? "combined" : "align"; }

inline SweepMode sweep_mode_from_string(std::string_view s) {
  if (s == "combined") return SweepMode::combined;
  if (s == "align") return SweepMode::align;
  throw Error(ErrorKind::usage, "unknown sweep mode '" + std::string(s) + "'");
}

/// Combined mode sets phonetic, filler and truncation noise to the level;
/// align mode sets only the alignment noise.
inline NoiseParams params_for_level(SweepMode mode, double level) {
  NoiseParams p;
  if (mode == SweepMode::combined) {
    p.phonetic = p.filler = p.truncation = level;
  } else {
    p.align = level;
  }
  return p;
}

struct SweepOptions {
  SweepMode mode = SweepMode::combined;
  GeneratorConfig generator;
  std::uint64_t seed = 0;
  std::size_t samples_per_level = 20;
  EvalOptions eval;
};

/// One report per level. Every backend sees the same dataset at a level,
/// and sample i draws its scene and command from the same seed at every
/// level.
inline std::vector<EvalReport> sweep_noise(std::span<const double> levels,
                                           std::span<const BackendConfig> backends,
                                           const SweepOptions& opt) {
  if (opt.samples_per_level < 1) throw Error(ErrorKind::usage, "samples per level must be >= 1");
  if (levels.empty()) throw Error(ErrorKind::usage, "no noise levels given");
  if (backends.empty()) throw Error(ErrorKind::usage, "no backends given");
  std::vector<Backend> handles;
  for (const auto& b : backends) handles.emplace_back(b);
  std::vector<EvalReport> out;
  for (double level : levels) {
    const auto data = generate_dataset(params_for_level(opt.mode, level), opt.generator,
                                       opt.samples_per_level, opt.seed);
    EvalOptions eo = opt.eval;
    eo.noise_level = level;
    std::vector<EvalRow> rows;
    for (const auto& h : handles) {
      auto rep = evaluate_dataset(data, h, eo);
      rows.insert(rows.end(), rep.rows.begin(), rep.rows.end());
    }
    out.push_back(make_report(std::move(rows)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report files

enum class ReportFormat { csv, json };

inline ReportFormat report_format_from_string(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw Error(ErrorKind::usage, "unknown report format '" + std::string(s) + "'");
}

inline constexpr std::string_view kCsvHeader =
    "backend,noise_level,n,accuracy,acc_ap,acc_a,acc_to1,acc_p,acc_to2";

namespace detail {

inline std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace detail

inline nlohmann::ordered_json to_json(const EvalReport& rep, bool include_latency = false) {
  nlohmann::ordered_json aggs = nlohmann::ordered_json::array();
  for (const auto& a : rep.aggregates) {
    nlohmann::ordered_json j;
    j["backend"] = a.backend;
    j["noise_level"] = a.noise_level;
    j["n"] = a.n;
    j["accuracy"] = a.accuracy;
    for (std::size_t k = 0; k < 5; ++k) j[std::string("acc_") + to_string(kAllSlots[k])] = a.slot_accuracy[k];
    aggs.push_back(std::move(j));
  }
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : rep.rows) {
    nlohmann::ordered_json j;
    j["sample_id"] = r.sample_id;
    j["backend"] = r.backend;
    j["noise_level"] = r.noise_level;
    j["exact_match"] = r.exact_match;
    nlohmann::ordered_json slots;
    for (std::size_t k = 0; k < 5; ++k) slots[to_string(kAllSlots[k])] = r.slot_correct[k];
    j["slots"] = std::move(slots);
    if (include_latency) j["latency_s"] = r.latency_s;
    rows.push_back(std::move(j));
  }
  return {{"aggregates", std::move(aggs)}, {"rows", std::move(rows)}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport rep;
    for (const auto& a : j.at("aggregates")) {
      EvalAggregate x;
      x.backend = a.at("backend").get<std::string>();
      x.noise_level = a.at("noise_level").get<double>();
      x.n = a.at("n").get<std::size_t>();
      x.accuracy = a.at("accuracy").get<double>();
      for (std::size_t k = 0; k < 5; ++k) {
        x.slot_accuracy[k] = a.at(std::string("acc_") + to_string(kAllSlots[k])).get<double>();
      }
      rep.aggregates.push_back(std::move(x));
    }
    for (const auto& r : j.at("rows")) {
      EvalRow x;
      x.sample_id = r.at("sample_id").get<std::uint64_t>();
      x.backend = r.at("backend").get<std::string>();
      x.noise_level = r.at("noise_level").get<double>();
      x.exact_match = r.at("exact_match").get<bool>();
      for (std::size_t k = 0; k < 5; ++k) x.slot_correct[k] = r.at("slots").at(to_string(kAllSlots[k])).get<bool>();
      x.latency_s = r.value("latency_s", 0.0);
      rep.rows.push_back(std::move(x));
    }
    return rep;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("bad report: ") + e.what());
  }
}

/// CSV: a metric comment line, the header, then one row per
/// (backend, noise level). JSON: {"metric", "reports": [...]} with
/// per-sample rows; latencies only when asked, so files stay reproducible.
inline void emit_report(std::ostream& out, std::span<const EvalReport> reports, ReportFormat format,
                        bool include_latency = false) {
  if (reports.empty()) throw Error(ErrorKind::usage, "no reports to emit");
  if (format == ReportFormat::csv) {
    out << "# metric=" << kMetricName << '\n' << kCsvHeader << '\n';
    for (const auto& rep : reports) {
      for (const auto& a : rep.aggregates) {
        out << a.backend << ',' << detail::shortest(a.noise_level) << ',' << a.n << ','
            << detail::shortest(a.accuracy);
        for (double v : a.slot_accuracy) out << ',' << detail::shortest(v);
        out << '\n';
      }
    }
  } else {
    nlohmann::ordered_json j;
    j["metric"] = kMetricName;
    j["reports"] = nlohmann::ordered_json::array();
    for (const auto& rep : reports) j["reports"].push_back(to_json(rep, include_latency));
    out << j.dump(2) << '\n';
  }
  if (!out) throw Error(ErrorKind::io, "failed to write report");
}

inline void write_report_file(const std::string& path, std::span<const EvalReport> reports,
                              ReportFormat format, bool include_latency = false) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path + "' for writing");
  emit_report(out, reports, format, include_latency);
}

inline std::vector<EvalReport> read_reports_json(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("bad report file: ") + e.what());
  }
  std::vector<EvalReport> out;
  if (!j.contains("reports") || !j["reports"].is_array()) {
    throw Error(ErrorKind::parse, "report file has no reports array");
  }
  for (const auto& r : j["reports"]) out.push_back(report_from_json(r));
  return out;
}

/// Structural problems in a JSON report document; empty when it conforms.
inline std::vector<std::string> check_report_json(const nlohmann::json& j) {
  std::vector<std::string> bad;
  auto need = [&](const nlohmann::json& o, const char* key, auto pred, const std::string& where) {
    if (!o.is_object() || !o.contains(key) || !pred(o[key])) bad.push_back(where + "." + key);
  };
  auto is_str = [](const nlohmann::json& v) { return v.is_string(); };
  auto is_unit = [](const nlohmann::json& v) {
    return v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
  };
  auto is_level = [](const nlohmann::json& v) { return v.is_number() && v.get<double>() >= 0.0; };
  auto is_count = [](const nlohmann::json& v) { return v.is_number_unsigned(); };
  auto is_bool = [](const nlohmann::json& v) { return v.is_boolean(); };
  auto is_arr = [](const nlohmann::json& v) { return v.is_array(); };

  if (!j.is_object() || j.value("metric", "") != kMetricName) bad.push_back("metric");
  need(j, "reports", is_arr, "$");
  if (!bad.empty()) return bad;
  for (std::size_t r = 0; r < j["reports"].size(); ++r) {
    const auto& rep = j["reports"][r];
    const std::string at = "$.reports[" + std::to_string(r) + "]";
    need(rep, "aggregates", is_arr, at);
    need(rep, "rows", is_arr, at);
    if (!bad.empty()) return bad;
    std::size_t total = 0;
    for (const auto& a : rep["aggregates"]) {
      need(a, "backend", is_str, at + ".aggregates[]");
      need(a, "noise_level", is_level, at + ".aggregates[]");
      need(a, "n", is_count, at + ".aggregates[]");
      need(a, "accuracy", is_unit, at + ".aggregates[]");
      for (auto s : kAllSlots) {
        const std::string key = std::string("acc_") + to_string(s);
        need(a, key.c_str(), is_unit, at + ".aggregates[]");
      }
      if (a.contains("n") && a["n"].is_number_unsigned()) total += a["n"].get<std::size_t>();
    }
    for (const auto& row : rep["rows"]) {
      need(row, "sample_id", is_count, at + ".rows[]");
      need(row, "backend", is_str, at + ".rows[]");
      need(row, "noise_level", is_level, at + ".rows[]");
      need(row, "exact_match", is_bool, at + ".rows[]");
      if (!row.contains("slots") || !row["slots"].is_object()) {
        bad.push_back(at + ".rows[].slots");
        continue;
      }
      for (auto s : kAllSlots) need(row["slots"], to_string(s), is_bool, at + ".rows[].slots");
    }
    if (total != rep["rows"].size()) bad.push_back(at + ": aggregate counts differ from row count");
  }
  return bad;
}

/// Structural problems in a CSV report; empty when it conforms.
inline std::vector<std::string> check_report_csv(std::istream& in) {
  std::vector<std::string> bad;
  std::string line;
  if (!std::getline(in, line) || line != "# metric=" + std::string(kMetricName)) {
    bad.push_back("line 1: metric comment");
  }
  if (!std::getline(in, line) || line != kCsvHeader) bad.push_back("line 2: header");
  for (int ln = 3; std::getline(in, line); ++ln) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 9 || cells[0].empty()) {
      bad.push_back("line " + std::to_string(ln) + ": expected 9 cells");
      continue;
    }
    for (std::size_t k = 1; k < 9; ++k) {
      double v = -1.0;
      auto [p, ec] = std::from_chars(cells[k].data(), cells[k].data() + cells[k].size(), v);
      if (ec != std::errc() || p != cells[k].data() + cells[k].size() || v < 0.0 ||
          (k >= 3 && v > 1.0)) {
        bad.push_back("line " + std::to_string(ln) + ": cell " + std::to_string(k + 1));
      }
    }
  }
  return bad;
}

}  // namespace fusemerge

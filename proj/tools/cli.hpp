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

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <fusemerge.hpp>

namespace fusemerge::cli {

namespace detail {

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  return in;
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorKind::io, "cannot open '" + path + "' for writing");
  return out;
}

inline std::string read_text(const std::string& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, "'" + path + "': " + e.what());
  }
}

inline std::vector<ModalitySentence> read_sentences(const std::string& path, Modality expected) {
  auto in = open_in(path);
  auto out = read_sentences_jsonl(in);
  for (const auto& s : out) {
    if (s.modality() != expected) {
      throw Error(ErrorKind::invalid, "'" + path + "' holds a " + to_string(s.modality()) +
                                          " sentence where " + to_string(expected) + " was expected");
    }
  }
  return out;
}

// Pairs gesture and voice lines by position; an absent file means empty
// sentences on that channel.
inline std::vector<std::pair<ModalitySentence, ModalitySentence>> read_pairs(
    const std::string& gesture_path, const std::string& voice_path) {
  std::vector<ModalitySentence> g, v;
  if (!gesture_path.empty()) g = read_sentences(gesture_path, Modality::gesture);
  if (!voice_path.empty()) v = read_sentences(voice_path, Modality::voice);
  if (gesture_path.empty()) g.assign(v.size(), ModalitySentence(Modality::gesture));
  if (voice_path.empty()) v.assign(g.size(), ModalitySentence(Modality::voice));
  if (g.size() != v.size()) {
    throw Error(ErrorKind::invalid, "gesture and voice files hold different numbers of sentences");
  }
  std::vector<std::pair<ModalitySentence, ModalitySentence>> out;
  for (std::size_t i = 0; i < g.size(); ++i) out.emplace_back(std::move(g[i]), std::move(v[i]));
  return out;
}

struct BackendFlags {
  std::string endpoint;
  std::string model;
  double timeout_s = 60.0;
  int max_retries = 2;
  int max_in_flight = 4;

  void add_to(CLI::App& app) {
    app.add_option("--endpoint", endpoint, "Chat endpoint for the http backend")
        ->envname("FUSEMERGE_ENDPOINT");
    app.add_option("--model", model, "Model name sent to the endpoint");
    app.add_option("--timeout", timeout_s, "Request timeout in seconds")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--max-retries", max_retries, "Retries on transport errors and unparseable output")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--max-in-flight", max_in_flight, "Concurrent requests to the endpoint")
        ->check(CLI::Range(1, BackendConfig::kMaxInFlight))
        ->capture_default_str();
  }

  BackendConfig make(const std::string& kind) const {
    BackendConfig c;
    c.kind = backend_kind_from_string(kind);
    if (!endpoint.empty()) c.endpoint = endpoint;
    if (!model.empty()) c.model_name = model;
    c.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000.0));
    c.max_retries = max_retries;
    c.max_in_flight = max_in_flight;
    return c;
  }
};

inline Channels channels_from_string(const std::string& s) {
  if (s == "both") return Channels::both;
  if (s == "voice") return Channels::voice_only;
  if (s == "gesture") return Channels::gesture_only;
  throw Error(ErrorKind::usage, "unknown channel selection '" + s + "'");
}

inline const std::vector<std::string> kBackendNames{"argmax", "heuristic", "oracle", "http"};

}  // namespace detail

/// Entry point of the fusemerge tool. Returns 0 on success, 1 on usage
/// errors and 2 on runtime errors.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Fuse voice and gesture lattices into robot skill commands", "fusemerge"};
  app.set_config("--config", "", "TOML or INI file with flag values; command-line flags win");
  bool json_errors = false;
  app.add_flag("--json-errors", json_errors, "Report errors as JSON on stderr");
  app.require_subcommand(1);

  // gen-dataset
  auto* gen = app.add_subcommand("gen-dataset", "Generate a synthetic noisy dataset (JSONL)");
  NoiseParams gp;
  std::size_t gen_n = 100;
  std::uint64_t gen_seed = 0;
  std::string gen_scenario = "none", gen_out;
  bool gen_unique = false;
  gen->add_option("--noise-phonetic", gp.phonetic, "Phonetic confusion probability")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen->add_option("--noise-filler", gp.filler, "Filler word probability per gap")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen->add_option("--noise-align", gp.align, "Alignment noise factor (seconds)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  gen->add_option("--noise-truncation", gp.truncation, "Sentence truncation probability")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen->add_option("--similarity-threshold", gp.similarity_threshold, "Confusable similarity threshold")
      ->check(CLI::Range(0.0, 100.0))->capture_default_str();
  gen->add_option("--n", gen_n, "Number of samples")->check(CLI::Range(1, 100000000))->capture_default_str();
  gen->add_option("--seed", gen_seed, "Base seed")->capture_default_str();
  gen->add_option("--scenario", gen_scenario, "Scenario preset")
      ->check(CLI::IsMember({"none", "t1", "t2", "t3", "t4"}))->capture_default_str();
  gen->add_flag("--unique-types", gen_unique, "At most one instance per object class");
  gen->add_option("--out", gen_out, "Output JSONL file")->required();

  // merge
  auto* merge = app.add_subcommand("merge", "Merge gesture and voice sentences by timestamp");
  std::string merge_g, merge_v, merge_out;
  merge->add_option("--gesture", merge_g, "Gesture sentences (JSONL)")->check(CLI::ExistingFile);
  merge->add_option("--voice", merge_v, "Voice sentences (JSONL)")->check(CLI::ExistingFile);
  merge->add_option("--out", merge_out, "Merged sentences (JSONL)");

  // decode
  auto* decode = app.add_subcommand("decode", "Decode sentences into skill commands");
  std::string dec_backend = "heuristic", dec_dataset, dec_g, dec_v, dec_scene, dec_registry, dec_out;
  detail::BackendFlags dec_flags;
  decode->add_option("--backend", dec_backend, "Reasoning backend")
      ->check(CLI::IsMember(detail::kBackendNames))->capture_default_str();
  auto* dec_ds = decode->add_option("--dataset", dec_dataset, "Dataset JSONL")->check(CLI::ExistingFile);
  auto* dec_go = decode->add_option("--gesture", dec_g, "Gesture sentences (JSONL)")->check(CLI::ExistingFile);
  auto* dec_vo = decode->add_option("--voice", dec_v, "Voice sentences (JSONL)")->check(CLI::ExistingFile);
  auto* dec_so = decode->add_option("--scene", dec_scene, "Scene JSON")->check(CLI::ExistingFile);
  decode->add_option("--registry", dec_registry, "Action registry JSON")->check(CLI::ExistingFile);
  decode->add_option("--out", dec_out, "Write results here instead of stdout");
  dec_ds->excludes(dec_go)->excludes(dec_vo)->excludes(dec_so);
  dec_flags.add_to(*decode);

  // render-prompt
  auto* render = app.add_subcommand("render-prompt", "Render the reasoning system prompt");
  std::string rp_scene, rp_registry, rp_template, rp_out;
  render->add_option("--scene", rp_scene, "Scene JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--registry", rp_registry, "Action registry JSON")->required()->check(CLI::ExistingFile);
  render->add_option("--template", rp_template, "Prompt template file")->check(CLI::ExistingFile);
  render->add_option("--out", rp_out, "Write the prompt here instead of stdout");

  // embed
  auto* embed = app.add_subcommand("embed", "Export soft embeddings of a merged sentence (.npy)");
  std::string em_input, em_provider = "hash", em_out, em_prompt;
  std::uint64_t em_seed = 0;
  std::size_t em_dim = 16;
  embed->add_option("--input", em_input, "Merged or single-channel sentence (JSON or first JSONL line)")
      ->required()->check(CLI::ExistingFile);
  embed->add_option("--provider", em_provider, "hash or table:PATH")->capture_default_str();
  embed->add_option("--system-prompt", em_prompt, "Prepend this prompt's token embeddings")
      ->check(CLI::ExistingFile);
  embed->add_option("--seed", em_seed, "Hash provider seed")->capture_default_str();
  embed->add_option("--dim", em_dim, "Hash provider dimension")->check(CLI::PositiveNumber)->capture_default_str();
  embed->add_option("--out", em_out, "Output .npy file")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate backends on a dataset");
  std::string ev_dataset, ev_report, ev_format = "csv", ev_channels = "both", ev_registry;
  std::vector<std::string> ev_backends{"argmax", "heuristic"};
  std::size_t ev_jobs = 1;
  bool ev_latency = false;
  detail::BackendFlags ev_flags;
  evaluate->add_option("--dataset", ev_dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--backends", ev_backends, "Comma-separated backends")
      ->delimiter(',')->check(CLI::IsMember(detail::kBackendNames))->capture_default_str();
  evaluate->add_option("--report", ev_report, "Report file")->required();
  evaluate->add_option("--format", ev_format, "Report format")
      ->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  evaluate->add_option("--channels", ev_channels, "Inputs passed to the pipeline")
      ->check(CLI::IsMember({"both", "voice", "gesture"}))->capture_default_str();
  evaluate->add_option("--registry", ev_registry, "Action registry JSON for every sample")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--jobs", ev_jobs, "Worker threads (0: all cores)")->capture_default_str();
  evaluate->add_flag("--with-latency", ev_latency, "Include per-sample latency in JSON reports");
  ev_flags.add_to(*evaluate);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Sweep noise levels and report accuracy per backend");
  std::string sw_mode = "combined", sw_report, sw_format = "csv", sw_scenario = "none", sw_channels = "both";
  std::vector<double> sw_levels{0.0, 0.2, 0.4, 0.6};
  std::vector<std::string> sw_backends{"argmax", "heuristic"};
  std::size_t sw_n = 20, sw_jobs = 1;
  std::uint64_t sw_seed = 0;
  bool sw_latency = false;
  detail::BackendFlags sw_flags;
  sweep->add_option("--mode", sw_mode, "combined: phonetic, filler and truncation; align: alignment only")
      ->check(CLI::IsMember({"combined", "align"}))->capture_default_str();
  sweep->add_option("--levels", sw_levels, "Comma-separated noise levels")
      ->delimiter(',')->check(CLI::NonNegativeNumber)->capture_default_str();
  sweep->add_option("--n", sw_n, "Samples per level")->check(CLI::Range(1, 100000000))->capture_default_str();
  sweep->add_option("--backends", sw_backends, "Comma-separated backends")
      ->delimiter(',')->check(CLI::IsMember(detail::kBackendNames))->capture_default_str();
  sweep->add_option("--seed", sw_seed, "Base seed")->capture_default_str();
  sweep->add_option("--scenario", sw_scenario, "Scenario preset")
      ->check(CLI::IsMember({"none", "t1", "t2", "t3", "t4"}))->capture_default_str();
  sweep->add_option("--channels", sw_channels, "Inputs passed to the pipeline")
      ->check(CLI::IsMember({"both", "voice", "gesture"}))->capture_default_str();
  sweep->add_option("--report", sw_report, "Report file")->required();
  sweep->add_option("--format", sw_format, "Report format")
      ->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  sweep->add_option("--jobs", sw_jobs, "Worker threads (0: all cores)")->capture_default_str();
  sweep->add_flag("--with-latency", sw_latency, "Include per-sample latency in JSON reports");
  sw_flags.add_to(*sweep);

  auto fail = [&](int code, std::string_view kind, const std::string& message) {
    if (json_errors) {
      nlohmann::ordered_json j;
      j["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
      err << j.dump() << '\n';
    } else {
      err << "fusemerge: " << message << '\n';
    }
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    // json_errors may not be set yet when parsing stopped early.
    for (int i = 1; i < argc; ++i) json_errors = json_errors || std::string_view(argv[i]) == "--json-errors";
    return fail(1, "usage", e.what());
  }

  set_warning_handler([&](std::string_view w) { err << "fusemerge: warning: " << w << '\n'; });
  struct ResetHandler {
    ~ResetHandler() { set_warning_handler(nullptr); }
  } reset_handler;

  try {
    if (*gen) {
      gp.check();
      auto config = GeneratorConfig::for_scenario(scenario_from_string(gen_scenario));
      config.scene.unique_types = gen_unique;
      auto data = generate_dataset(gp, config, gen_n, gen_seed);
      auto f = detail::open_out(gen_out);
      write_dataset_jsonl(f, data);
      if (!f) throw Error(ErrorKind::io, "failed to write '" + gen_out + "'");
    } else if (*merge) {
      if (merge_g.empty() && merge_v.empty()) {
        throw Error(ErrorKind::usage, "merge needs --gesture, --voice or both");
      }
      const auto pairs = detail::read_pairs(merge_g, merge_v);
      std::ofstream f;
      if (!merge_out.empty()) f = detail::open_out(merge_out);
      for (const auto& [g, v] : pairs) {
        const auto m = merge_sentences(g, v);
        out << render_lattice_as_text(m) << '\n';
        if (f.is_open()) f << to_json(m).dump() << '\n';
      }
    } else if (*decode) {
      const Backend backend(dec_flags.make(dec_backend));
      std::optional<ActionRegistry> registry;
      if (!dec_registry.empty()) registry = registry_from_json(detail::read_json(dec_registry));
      std::ofstream f;
      if (!dec_out.empty()) f = detail::open_out(dec_out);
      std::ostream& sink = f.is_open() ? static_cast<std::ostream&>(f) : out;
      auto emit = [&](std::optional<std::uint64_t> id, const PipelineResult& r) {
        auto j = to_json(r);
        j.erase("latency_s");
        nlohmann::ordered_json line;
        if (id) line["sample_id"] = *id;
        for (auto& [k, v] : j.items()) line[k] = v;
        sink << line.dump() << '\n';
      };
      if (!dec_dataset.empty()) {
        auto in = detail::open_in(dec_dataset);
        for (const auto& s : read_dataset_jsonl(in)) {
          const auto reg = registry ? *registry : registry_for(s.scenario);
          emit(s.sample_id, run_pipeline(backend, s.gesture, s.voice, s.scene, reg,
                                         make_prompt_context(s.scene, reg), s.ground_truth));
        }
      } else {
        if (dec_scene.empty() || (dec_g.empty() && dec_v.empty())) {
          throw Error(ErrorKind::usage, "decode needs --dataset or --scene with --gesture/--voice");
        }
        const auto scene = scene_from_json(detail::read_json(dec_scene));
        const auto reg = registry ? *registry : ActionRegistry::standard();
        const auto ctx = make_prompt_context(scene, reg);
        for (const auto& [g, v] : detail::read_pairs(dec_g, dec_v)) {
          emit(std::nullopt, run_pipeline(backend, g, v, scene, reg, ctx));
        }
      }
    } else if (*render) {
      const auto scene = scene_from_json(detail::read_json(rp_scene));
      const auto reg = registry_from_json(detail::read_json(rp_registry));
      const std::string tmpl =
          rp_template.empty() ? std::string(default_prompt_template()) : detail::read_text(rp_template);
      const auto text = render_system_prompt(make_prompt_context(scene, reg), tmpl);
      if (rp_out.empty()) {
        out << text;
      } else {
        auto f = detail::open_out(rp_out);
        f << text;
      }
    } else if (*embed) {
      std::unique_ptr<EmbeddingProvider> provider;
      if (em_provider == "hash") {
        provider = std::make_unique<HashEmbeddingProvider>(em_seed, em_dim);
      } else if (em_provider.rfind("table:", 0) == 0) {
        provider = std::make_unique<TableEmbeddingProvider>(TableEmbeddingProvider::load(em_provider.substr(6)));
      } else {
        throw Error(ErrorKind::usage, "--provider must be 'hash' or 'table:PATH'");
      }
      auto in = detail::open_in(em_input);
      nlohmann::json j;
      try {
        std::string first;
        std::ostringstream all;
        all << in.rdbuf();
        std::istringstream lines(all.str());
        // A JSON document or the first record of a JSONL file.
        try {
          j = nlohmann::json::parse(all.str());
        } catch (const nlohmann::json::exception&) {
          while (std::getline(lines, first) && first.find_first_not_of(" \t\r") == std::string::npos) {}
          j = nlohmann::json::parse(first);
        }
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, "'" + em_input + "': " + e.what());
      }
      const auto merged = merged_from_json(j);
      const auto sp = em_prompt.empty()
                          ? build_soft_tokens(merged, *provider)
                          : build_soft_prompt(detail::read_text(em_prompt), merged, *provider);
      auto f = detail::open_out(em_out, true);
      write_npy(f, sp);
      out << "wrote [1, " << sp.rows() << ", " << sp.dim() << "] to " << em_out << '\n';
    } else if (*evaluate) {
      auto in = detail::open_in(ev_dataset);
      const auto data = read_dataset_jsonl(in);
      EvalOptions opt;
      opt.jobs = ev_jobs;
      opt.channels = detail::channels_from_string(ev_channels);
      if (!ev_registry.empty()) opt.registry = registry_from_json(detail::read_json(ev_registry));
      std::vector<Backend> backends;
      for (const auto& b : ev_backends) backends.emplace_back(ev_flags.make(b));
      std::vector<EvalRow> rows;
      for (const auto& b : backends) {
        auto rep = evaluate_dataset(data, b, opt);
        rows.insert(rows.end(), rep.rows.begin(), rep.rows.end());
      }
      const std::vector<EvalReport> reports{make_report(std::move(rows))};
      write_report_file(ev_report, reports, report_format_from_string(ev_format), ev_latency);
    } else if (*sweep) {
      SweepOptions opt;
      opt.mode = sweep_mode_from_string(sw_mode);
      opt.generator = GeneratorConfig::for_scenario(scenario_from_string(sw_scenario));
      opt.seed = sw_seed;
      opt.samples_per_level = sw_n;
      opt.eval.jobs = sw_jobs;
      opt.eval.channels = detail::channels_from_string(sw_channels);
      std::vector<BackendConfig> backends;
      for (const auto& b : sw_backends) backends.push_back(sw_flags.make(b));
      const auto reports = sweep_noise(sw_levels, backends, opt);
      write_report_file(sw_report, reports, report_format_from_string(sw_format), sw_latency);
    }
  } catch (const Error& e) {
    return fail(e.kind() == ErrorKind::usage ? 1 : 2, to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail(2, "internal", e.what());
  }
  return 0;
}

}  // namespace fusemerge::cli

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

#include <atomic>
#include <chrono>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fusemerge/baseline.hpp"
#include "fusemerge/error.hpp"
#include "fusemerge/lattice.hpp"
#include "fusemerge/prompt.hpp"
#include "fusemerge/scene.hpp"
#include "fusemerge/skill_command.hpp"

namespace fusemerge {

enum class BackendKind { argmax, heuristic, oracle, http };

inline const char* to_string(BackendKind k) {
  switch (k) {
    case BackendKind::argmax: return "argmax";
    case BackendKind::heuristic: return "heuristic";
    case BackendKind::oracle: return "oracle";
    case BackendKind::http: return "http";
  }
  return "";
}

inline BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "argmax") return BackendKind::argmax;
  if (s == "heuristic") return BackendKind::heuristic;
  if (s == "oracle") return BackendKind::oracle;
  if (s == "http") return BackendKind::http;
  throw Error(ErrorKind::usage, "unknown backend '" + std::string(s) + "'");
}

struct BackendConfig {
  BackendKind kind = BackendKind::argmax;
  std::optional<std::string> endpoint;  // http://host[:port]/path
  std::optional<std::string> model_name;
  double temperature = 0.0;
  double top_p = 1.0;
  double repetition_penalty = 1.1;
  int max_retries = 2;
  std::chrono::milliseconds timeout{60000};
  int max_in_flight = 4;
  HeuristicOptions heuristic;

  void check() const {
    if (kind == BackendKind::http && (!endpoint || endpoint->empty())) {
      throw Error(ErrorKind::config, "the http backend needs an endpoint");
    }
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
      throw Error(ErrorKind::config, "temperature must lie in [0, 2]");
    }
    if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorKind::config, "top_p must lie in (0, 1]");
    if (!(repetition_penalty > 0.0 && std::isfinite(repetition_penalty))) {
      throw Error(ErrorKind::config, "repetition penalty must be positive");
    }
    if (max_retries < 0) throw Error(ErrorKind::config, "max_retries must be >= 0");
    if (timeout.count() <= 0) throw Error(ErrorKind::config, "timeout must be positive");
    if (max_in_flight < 1 || max_in_flight > kMaxInFlight) {
      throw Error(ErrorKind::config, "max_in_flight must lie in [1, 256]");
    }
  }

  static constexpr int kMaxInFlight = 256;
};

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_endpoint(const std::string& url) {
  std::string rest = url;
  std::string scheme = "http";
  if (auto p = url.find("://"); p != std::string::npos) {
    scheme = url.substr(0, p);
    rest = url.substr(p + 3);
  }
  if (scheme != "http") {
    throw Error(ErrorKind::config, "unsupported endpoint scheme '" + scheme + "' (only http)");
  }
  const auto slash = rest.find('/');
  Endpoint e;
  e.origin = "http://" + rest.substr(0, slash);
  e.path = slash == std::string::npos ? "/" : rest.substr(slash);
  if (rest.empty() || slash == 0) throw Error(ErrorKind::config, "endpoint has no host: " + url);
  return e;
}

struct BackendState {
  explicit BackendState(int cap) : in_flight(cap) {}
  std::counting_semaphore<BackendConfig::kMaxInFlight> in_flight;
  std::atomic<bool> send_penalty{true};
};

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<BackendConfig::kMaxInFlight>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<BackendConfig::kMaxInFlight>& s_;
};

}  // namespace detail

/// A validated backend configuration plus the state shared by every call
/// through it: the in-flight request cap and whether the server accepts a
/// repetition penalty. Copies share that state; concurrent use is allowed.
class Backend {
 public:
  explicit Backend(BackendConfig config) : config_(std::move(config)) {
    config_.check();
    if (config_.kind == BackendKind::http) (void)detail::split_endpoint(*config_.endpoint);
    state_ = std::make_shared<detail::BackendState>(config_.max_in_flight);
  }

  const BackendConfig& config() const noexcept { return config_; }
  BackendKind kind() const noexcept { return config_.kind; }

  /// Sends one chat request and returns the assistant text. Transport
  /// failures and 5xx replies are retried up to max_retries times.
  std::string chat(const std::string& system_prompt, const std::string& user_message) const {
    const auto ep = detail::split_endpoint(*config_.endpoint);
    detail::SlotGuard slot(state_->in_flight);
    httplib::Client client(ep.origin);
    const auto secs = config_.timeout.count() / 1000;
    const auto usecs = (config_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    std::string last_error;
    for (int attempt = 0; attempt <= config_.max_retries;) {
      const bool penalty = state_->send_penalty.load();
      const auto body = request_body(system_prompt, user_message, penalty).dump();
      auto res = client.Post(ep.path, body, "application/json");
      if (!res) {
        last_error = "request to " + *config_.endpoint + " failed: " + httplib::to_string(res.error());
        ++attempt;
        continue;
      }
      if (res->status >= 400 && res->status < 500 && penalty &&
          res->body.find("repetition_penalty") != std::string::npos) {
        // Not a retry: the server rejected an optional field.
        state_->send_penalty.store(false);
        warn("endpoint rejected repetition_penalty; sending requests without it");
        continue;
      }
      if (res->status >= 500) {
        last_error = "endpoint returned HTTP " + std::to_string(res->status);
        ++attempt;
        continue;
      }
      if (res->status != 200) {
        throw Error(ErrorKind::transport, "endpoint returned HTTP " + std::to_string(res->status) +
                                              ": " + res->body.substr(0, 200));
      }
      return response_text(res->body);
    }
    throw Error(ErrorKind::transport,
                last_error + " (after " + std::to_string(config_.max_retries + 1) + " attempts)");
  }

  nlohmann::ordered_json request_body(const std::string& system_prompt,
                                      const std::string& user_message, bool penalty) const {
    nlohmann::ordered_json j;
    j["model"] = config_.model_name.value_or("default");
    j["messages"] = nlohmann::ordered_json::array(
        {{{"role", "system"}, {"content", system_prompt}}, {{"role", "user"}, {"content", user_message}}});
    j["temperature"] = config_.temperature;
    j["top_p"] = config_.top_p;
    if (penalty) j["repetition_penalty"] = config_.repetition_penalty;
    return j;
  }

  bool sends_repetition_penalty() const noexcept { return state_->send_penalty.load(); }

 private:
  static std::string response_text(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::transport, std::string("malformed chat response: ") + e.what());
    }
  }

  BackendConfig config_;
  std::shared_ptr<detail::BackendState> state_;
};

/// Raw reasoner output for one merged sentence. Baseline kinds decode
/// locally and render their draft as the output line; oracle renders the
/// given truth; http asks the endpoint with the system prompt built from
/// `ctx` and the lattice text as the user message.
inline std::string infer(const Backend& backend, const PromptContext& ctx, const MergedSentence& s,
                         const Scene& scene, const ActionRegistry& registry,
                         const std::optional<SkillCommand>& oracle_truth = std::nullopt) {
  switch (backend.kind()) {
    case BackendKind::argmax:
      return render_output_line(argmax_decode(s, registry, scene).command);
    case BackendKind::heuristic:
      return render_output_line(heuristic_resolve(s, registry, scene, backend.config().heuristic).command);
    case BackendKind::oracle:
      if (!oracle_truth) throw Error(ErrorKind::config, "the oracle backend needs the ground truth");
      return render_output_line(*oracle_truth);
    case BackendKind::http:
      return backend.chat(render_system_prompt(ctx), render_lattice_as_text(s));
  }
  throw Error(ErrorKind::config, "unknown backend kind");
}

struct PipelineResult {
  std::optional<SkillCommand> command;  // present iff violations is empty
  std::vector<Violation> violations;
  std::optional<std::string> raw_generation;
  std::chrono::duration<double> latency{0};
  BackendKind backend = BackendKind::argmax;
};

inline nlohmann::ordered_json to_json(const PipelineResult& r) {
  nlohmann::ordered_json j;
  j["backend"] = to_string(r.backend);
  j["command"] = r.command ? to_json(*r.command) : nlohmann::ordered_json(nullptr);
  auto v = nlohmann::ordered_json::array();
  for (const auto& x : r.violations) v.push_back({{"kind", to_string(x.kind)}, {"detail", x.detail}});
  j["violations"] = std::move(v);
  j["raw_generation"] = r.raw_generation ? nlohmann::ordered_json(*r.raw_generation)
                                         : nlohmann::ordered_json(nullptr);
  j["latency_s"] = r.latency.count();
  return j;
}

/// Merge, infer, parse and validate. Decoding and parsing failures become
/// an undecodable violation and rule breaks become violations; only
/// configuration, transport and I/O errors are thrown. Either sentence may
/// be empty, not both.
inline PipelineResult run_pipeline(const Backend& backend, const ModalitySentence& gesture,
                                   const ModalitySentence& voice, const Scene& scene,
                                   const ActionRegistry& registry, const PromptContext& ctx,
                                   const std::optional<SkillCommand>& oracle_truth = std::nullopt) {
  if (gesture.empty() && voice.empty()) {
    throw Error(ErrorKind::usage, "both modality sentences are empty");
  }
  const auto start = std::chrono::steady_clock::now();
  PipelineResult r;
  r.backend = backend.kind();
  const auto merged = merge_sentences(gesture, voice);

  const int attempts = backend.kind() == BackendKind::http ? backend.config().max_retries + 1 : 1;
  std::optional<SkillCommand> parsed;
  std::string failure;
  for (int i = 0; i < attempts && !parsed; ++i) {
    try {
      r.raw_generation = infer(backend, ctx, merged, scene, registry, oracle_truth);
      parsed = parse_reasoner_output(*r.raw_generation);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::decode && e.kind() != ErrorKind::parse) throw;
      failure = e.what();
    }
  }
  if (parsed) {
    r.violations = validate(*parsed, scene, registry);
    if (r.violations.empty()) r.command = std::move(parsed);
  } else {
    r.violations.push_back({ViolationKind::undecodable, failure});
  }
  r.latency = std::chrono::steady_clock::now() - start;
  return r;
}

}  // namespace fusemerge

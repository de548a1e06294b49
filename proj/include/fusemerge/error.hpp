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

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fusemerge {

/// Broad failure classes. The CLI maps `usage` to exit code 1 and
/// everything else to exit code 2.
enum class ErrorKind {
  usage,      // bad flag values or preconditions on caller input
  config,     // inconsistent configuration (registry, generator, backend)
  invalid,    // a value violates a type invariant
  parse,      // malformed text or file content
  decode,     // input carries too little information to decode
  transport,  // backend unreachable or returned garbage
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::config: return "config";
    case ErrorKind::invalid: return "invalid";
    case ErrorKind::parse: return "parse";
    case ErrorKind::decode: return "decode";
    case ErrorKind::transport: return "transport";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

struct WarningSink {
  std::mutex mutex;
  std::function<void(std::string_view)> handler = [](std::string_view msg) {
    std::cerr << "fusemerge: warning: " << msg << '\n';
  };
};

inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace detail

/// Replaces the process-wide warning handler. Passing an empty function
/// silences warnings.
inline void set_warning_handler(std::function<void(std::string_view)> handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  sink.handler = std::move(handler);
}

inline void warn(std::string_view message) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  if (sink.handler) sink.handler(message);
}

}  // namespace fusemerge

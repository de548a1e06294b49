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

#include <cctype>
#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "fusemerge/error.hpp"
#include "fusemerge/lattice.hpp"
#include "fusemerge/scene.hpp"
#include "fusemerge/skill_command.hpp"

namespace fusemerge {

struct PromptExample {
  std::string title;
  std::string user;
  std::string assistant;

  friend bool operator==(const PromptExample&, const PromptExample&) = default;
};

/// Task parameters substituted into the system prompt.
struct PromptContext {
  std::vector<std::string> valid_properties;
  std::vector<std::string> valid_actions;
  std::vector<std::string> valid_objects;  // class names
  std::string scene_description;
  std::vector<PromptExample> examples;

  friend bool operator==(const PromptContext&, const PromptContext&) = default;
};

inline std::vector<PromptExample> default_prompt_examples() {
  return {
      {"Simple Action", "pick up cup1 cup.",
       "action: pick, object1: cup1, object2: none, property: none, relationship: none"},
      {"Action with Property", "slow pour cup cup1 to bowl1 bowl.",
       "action: pour, object1: cup1, object2: bowl1, property: slow, relationship: to"},
      {"Attribute-Based Object", "pick up the wide blue object.",
       "action: pick, object1: cube1, object2: none, property: none, relationship: none"},
  };
}

/// Reasoning prompt with placeholders <inserted_properties>,
/// <inserted_actions>, <inserted_objects>, <inserted_scene_description> and
/// the optional <inserted_examples>. Same text as data/system_prompt.txt.
inline std::string_view default_prompt_template() {
  static constexpr std::string_view kTemplate =
      R"PROMPT(Task
You are an assistant that analyzes user requests to infer actions, objects, relationships, and action property. Follow these steps:

Reasoning Steps
1. Read the user's input.
2. Identify the action (from: <inserted_actions>) and its property (e.g., speed: "fast"). If actions/property are repeated (e.g., 'fast fast pour'), treat them as stronger evidence for a single instance (e.g., 'fast').
3. Determine the primary object (from: <inserted_objects>). If objects are mentioned multiple times (e.g., 'cup cup'), infer they refer to the same grounded instance (e.g., cup1), unless attributes/context imply separate objects.
4. Check for a secondary object and its relationship to the primary object (e.g., "to", "from").
5. Explain reasoning, check the valid actions and objects. Verify if repeated terms map to a single object instance in the scene. If ambiguity exists, use attributes or default to the primary valid object.
6. Output your reasoning, then finalize with output in the following format:
   action: X, object1: Y, object2: Z, property: P, relationship: R

Context
- Valid properties: <inserted_properties>
- Valid Actions: <inserted_actions>
- Valid Objects: <inserted_objects>
- Scene Description: <inserted_scene_description>

Examples
<inserted_examples>
)PROMPT";
  return kTemplate;
}

/// Builds the task parameters for one scene: the registry's properties and
/// actions, the scene's classes, its rendered description and the default
/// few-shot examples.
inline PromptContext make_prompt_context(const Scene& scene, const ActionRegistry& registry) {
  PromptContext ctx;
  ctx.valid_properties.assign(registry.properties().begin(), registry.properties().end());
  ctx.valid_actions = registry.action_names();
  ctx.valid_objects = scene.types();
  ctx.scene_description = render_scene_description(scene);
  ctx.examples = default_prompt_examples();
  return ctx;
}

namespace detail {

inline std::string bracket_list(const std::vector<std::string>& items, bool quoted) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    if (quoted) out += '"';
    out += items[i];
    if (quoted) out += '"';
  }
  out += ']';
  return out;
}

inline std::string render_examples(const std::vector<PromptExample>& examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i) out += "\n\n";
    out += "Example " + std::to_string(i + 1) + ": " + examples[i].title + "\n";
    out += "User: \"" + examples[i].user + "\"\n";
    out += "Assistant: `" + examples[i].assistant + "`";
  }
  return out;
}

inline void replace_all(std::string& text, std::string_view key, const std::string& value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos;
       pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
}

}  // namespace detail

/// Substitutes the context into `tmpl`. Properties render as [a, b],
/// actions and objects as ["a", "b"]. Throws when a list or the scene
/// description is empty or a required placeholder is missing.
inline std::string render_system_prompt(const PromptContext& ctx,
                                        std::string_view tmpl = default_prompt_template()) {
  if (ctx.valid_properties.empty()) throw Error(ErrorKind::usage, "no valid properties given");
  if (ctx.valid_actions.empty()) throw Error(ErrorKind::usage, "no valid actions given");
  if (ctx.valid_objects.empty()) throw Error(ErrorKind::usage, "no valid objects given");
  if (ctx.scene_description.empty()) throw Error(ErrorKind::usage, "scene description is empty");
  for (std::string_view key : {"<inserted_properties>", "<inserted_actions>", "<inserted_objects>",
                               "<inserted_scene_description>"}) {
    if (tmpl.find(key) == std::string_view::npos) {
      throw Error(ErrorKind::parse, "prompt template lacks placeholder " + std::string(key));
    }
  }
  std::string out(tmpl);
  // Scene text goes last so placeholder-like words inside it stay literal.
  detail::replace_all(out, "<inserted_properties>", detail::bracket_list(ctx.valid_properties, false));
  detail::replace_all(out, "<inserted_actions>", detail::bracket_list(ctx.valid_actions, true));
  detail::replace_all(out, "<inserted_objects>", detail::bracket_list(ctx.valid_objects, true));
  detail::replace_all(out, "<inserted_examples>", detail::render_examples(ctx.examples));
  detail::replace_all(out, "<inserted_scene_description>", ctx.scene_description);
  return out;
}

// ---------------------------------------------------------------------------
// Text form of a lattice, for backends that only take text:
//   [(0.3, {'place': 0.80, 'plate': 0.30}), (0.6, {'to': 1.00})]

inline std::string format_timestamp(double t) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, t);
  return std::string(buf, ptr);
}

inline std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", w);
  return buf;
}

inline std::string render_lattice_as_text(const MergedSentence& s) {
  std::string out = "[";
  bool first_word = true;
  for (const auto& mw : s.words()) {
    if (!first_word) out += ", ";
    first_word = false;
    out += "(" + format_timestamp(mw.word.timestamp()) + ", {";
    bool first = true;
    for (const auto& c : mw.word.candidates()) {
      if (!first) out += ", ";
      first = false;
      out += "'" + c.token + "': " + format_weight(c.weight);
    }
    out += "})";
  }
  out += "]";
  return out;
}

namespace detail {

class LatticeTextParser {
 public:
  explicit LatticeTextParser(std::string_view text) : text_(text) {}

  std::vector<TimedWord> parse() {
    std::vector<TimedWord> words;
    expect('[');
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      finish();
      return words;
    }
    for (;;) {
      words.push_back(word());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      expect(']');
      finish();
      return words;
    }
  }

 private:
  TimedWord word() {
    expect('(');
    const double t = number();
    expect(',');
    expect('{');
    std::vector<Candidate> cands;
    skip_ws();
    if (peek() != '}') {
      for (;;) {
        std::string tok = quoted();
        expect(':');
        cands.push_back({std::move(tok), number()});
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        break;
      }
    }
    expect('}');
    expect(')');
    return TimedWord(t, std::move(cands));
  }

  std::string quoted() {
    expect('\'');
    const auto end = text_.find('\'', pos_);
    if (end == std::string_view::npos) fail("unterminated token");
    std::string tok(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return tok;
  }

  double number() {
    skip_ws();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), v);
    if (ec != std::errc{}) fail("expected a number");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return v;
  }

  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  void finish() {
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters");
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::parse, "lattice text, offset " + std::to_string(pos_) + ": " + what);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Reads render_lattice_as_text output back. Source modality is not part
/// of the text form; every word comes back as voice.
inline MergedSentence parse_lattice_text(std::string_view text) {
  std::vector<MergedWord> words;
  for (auto& w : detail::LatticeTextParser(text).parse()) {
    words.push_back({std::move(w), Modality::voice});
  }
  return MergedSentence(std::move(words));
}

}  // namespace fusemerge

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
#include <cctype>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fusemerge/error.hpp"
#include "fusemerge/scene.hpp"

namespace fusemerge {

/// Number of objects an action operates on.
enum class Arity { zero, one, two };

inline const char* to_string(Arity a) {
  switch (a) {
    case Arity::zero: return "zero";
    case Arity::one: return "single";
    case Arity::two: return "double";
  }
  return "";
}

inline Arity arity_from_string(std::string_view s) {
  if (s == "zero") return Arity::zero;
  if (s == "single" || s == "one") return Arity::one;
  if (s == "double" || s == "two") return Arity::two;
  throw Error(ErrorKind::parse, "unknown arity '" + std::string(s) + "'");
}

struct ActionSpec {
  std::string name;
  Arity arity = Arity::zero;
  std::vector<std::string> prepositions;  // non-empty iff arity is two

  friend bool operator==(const ActionSpec&, const ActionSpec&) = default;
};

/// The actions, prepositions and action properties a command may use.
class ActionRegistry {
 public:
  ActionRegistry(std::vector<ActionSpec> actions, std::vector<std::string> properties,
                 std::vector<std::string> property_aliases = {})
      : actions_(std::move(actions)),
        properties_(std::move(properties)),
        aliases_(std::move(property_aliases)) {
    if (actions_.empty()) throw Error(ErrorKind::config, "action registry is empty");
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      const auto& a = actions_[i];
      if (a.name.empty()) throw Error(ErrorKind::config, "action with empty name");
      for (std::size_t j = 0; j < i; ++j) {
        if (actions_[j].name == a.name) {
          throw Error(ErrorKind::config, "action '" + a.name + "' registered twice");
        }
      }
      if (a.arity == Arity::two && a.prepositions.empty()) {
        throw Error(ErrorKind::config,
                    "double-object action '" + a.name + "' needs prepositions");
      }
      if (a.arity != Arity::two && !a.prepositions.empty()) {
        throw Error(ErrorKind::config, "only double-object actions take prepositions");
      }
    }
  }

  /// Zero: stop, release, home. Single: pick, push, pass, place, point,
  /// open, close. Double: pour, put with into/onto. Properties quickly,
  /// slowly, carefully, forcefully; fast, slow and force are accepted too.
  static ActionRegistry standard() {
    std::vector<ActionSpec> actions;
    for (const char* n : {"stop", "release", "home"}) actions.push_back({n, Arity::zero, {}});
    for (const char* n : {"pick", "push", "pass", "place", "point", "open", "close"}) {
      actions.push_back({n, Arity::one, {}});
    }
    for (const char* n : {"pour", "put"}) actions.push_back({n, Arity::two, {"into", "onto"}});
    return ActionRegistry(std::move(actions), {"quickly", "slowly", "carefully", "forcefully"},
                          {"fast", "slow", "force"});
  }

  std::span<const ActionSpec> actions() const noexcept { return actions_; }
  std::span<const std::string> properties() const noexcept { return properties_; }
  std::span<const std::string> property_aliases() const noexcept { return aliases_; }

  const ActionSpec* find(std::string_view name) const noexcept {
    for (const auto& a : actions_) if (a.name == name) return &a;
    return nullptr;
  }

  bool is_action(std::string_view tok) const noexcept { return find(tok) != nullptr; }

  bool is_property(std::string_view tok) const noexcept {
    return std::find(properties_.begin(), properties_.end(), tok) != properties_.end() ||
           std::find(aliases_.begin(), aliases_.end(), tok) != aliases_.end();
  }

  bool is_preposition(std::string_view tok) const noexcept {
    return std::any_of(actions_.begin(), actions_.end(), [&](const ActionSpec& a) {
      return std::find(a.prepositions.begin(), a.prepositions.end(), tok) != a.prepositions.end();
    });
  }

  std::vector<std::string> action_names() const {
    std::vector<std::string> out;
    for (const auto& a : actions_) out.push_back(a.name);
    return out;
  }

  /// Copy with `name` replaced or appended.
  ActionRegistry with_action(ActionSpec spec) const {
    auto actions = actions_;
    auto it = std::find_if(actions.begin(), actions.end(),
                           [&](const ActionSpec& a) { return a.name == spec.name; });
    if (it == actions.end()) {
      actions.push_back(std::move(spec));
    } else {
      *it = std::move(spec);
    }
    return ActionRegistry(std::move(actions), properties_, aliases_);
  }

  friend bool operator==(const ActionRegistry&, const ActionRegistry&) = default;

 private:
  std::vector<ActionSpec> actions_;
  std::vector<std::string> properties_;
  std::vector<std::string> aliases_;
};

/// Action parameter, action, first object, preposition, second object.
/// Objects are scene instance ids.
struct SkillCommand {
  std::optional<std::string> ap;
  std::string a;
  std::optional<std::string> to1;
  std::optional<std::string> p;
  std::optional<std::string> to2;

  friend bool operator==(const SkillCommand&, const SkillCommand&) = default;
};

enum class ViolationKind {
  unknown_action,
  unknown_property,
  arity_mismatch,
  ungrounded_object,
  illegal_preposition,
  duplicate_object,
  undecodable,  // the reasoner produced no usable command at all
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::unknown_action: return "unknown_action";
    case ViolationKind::unknown_property: return "unknown_property";
    case ViolationKind::arity_mismatch: return "arity_mismatch";
    case ViolationKind::ungrounded_object: return "ungrounded_object";
    case ViolationKind::illegal_preposition: return "illegal_preposition";
    case ViolationKind::duplicate_object: return "duplicate_object";
    case ViolationKind::undecodable: return "undecodable";
  }
  return "";
}

struct Violation {
  ViolationKind kind;
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Every rule `cmd` breaks against `scene` and `registry`; empty means valid.
inline std::vector<Violation> validate(const SkillCommand& cmd, const Scene& scene,
                                       const ActionRegistry& registry) {
  std::vector<Violation> out;
  if (cmd.ap && !registry.is_property(*cmd.ap)) {
    out.push_back({ViolationKind::unknown_property, "'" + *cmd.ap + "' is not a property"});
  }
  const ActionSpec* spec = registry.find(cmd.a);
  if (!spec) {
    out.push_back({ViolationKind::unknown_action, "'" + cmd.a + "' is not a registered action"});
  } else {
    const bool want_to1 = spec->arity != Arity::zero;
    const bool want_rest = spec->arity == Arity::two;
    auto check = [&](const std::optional<std::string>& v, bool wanted, const char* slot) {
      if (v.has_value() == wanted) return;
      out.push_back({ViolationKind::arity_mismatch,
                     std::string(slot) + (wanted ? " is required by '" : " is forbidden by '") +
                         spec->name + "' (" + to_string(spec->arity) + " arity)"});
    };
    check(cmd.to1, want_to1, "to1");
    check(cmd.p, want_rest, "p");
    check(cmd.to2, want_rest, "to2");
    if (cmd.p && want_rest &&
        std::find(spec->prepositions.begin(), spec->prepositions.end(), *cmd.p) ==
            spec->prepositions.end()) {
      out.push_back({ViolationKind::illegal_preposition,
                     "'" + *cmd.p + "' is not allowed with '" + spec->name + "'"});
    }
  }
  for (const auto* slot : {&cmd.to1, &cmd.to2}) {
    if (*slot && !scene.contains(**slot)) {
      out.push_back({ViolationKind::ungrounded_object, "'" + **slot + "' is not in the scene"});
    }
  }
  if (cmd.to1 && cmd.to2 && *cmd.to1 == *cmd.to2) {
    out.push_back({ViolationKind::duplicate_object, "to1 and to2 are both '" + *cmd.to1 + "'"});
  }
  return out;
}

/// "quickly push tomatoes1 near bowl1": present fields in slot order.
inline std::string to_canonical_string(const SkillCommand& cmd) {
  std::string out;
  auto add = [&](const std::string& s) {
    if (!out.empty()) out += ' ';
    out += s;
  };
  if (cmd.ap) add(*cmd.ap);
  add(cmd.a);
  if (cmd.to1) add(*cmd.to1);
  if (cmd.p) add(*cmd.p);
  if (cmd.to2) add(*cmd.to2);
  return out;
}

/// Inverse of to_canonical_string. A leading property word is the action
/// parameter; the remaining words fill a, to1, p, to2 in order.
inline SkillCommand parse_canonical_string(std::string_view text, const ActionRegistry& registry) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  for (std::string w; in >> w;) words.push_back(w);
  std::size_t i = 0;
  SkillCommand cmd;
  if (words.size() > 1 && !registry.is_action(words[0]) && registry.is_property(words[0])) {
    cmd.ap = words[i++];
  }
  if (i >= words.size()) throw Error(ErrorKind::parse, "command text has no action");
  cmd.a = words[i++];
  if (i < words.size()) cmd.to1 = words[i++];
  if (i < words.size()) cmd.p = words[i++];
  if (i < words.size()) cmd.to2 = words[i++];
  if (i < words.size()) throw Error(ErrorKind::parse, "command text has trailing words");
  return cmd;
}

/// The reasoner output line:
/// "action: X, object1: Y, object2: Z, property: P, relationship: R".
inline std::string render_output_line(const SkillCommand& cmd) {
  auto v = [](const std::optional<std::string>& s) { return s ? *s : std::string("none"); };
  return "action: " + cmd.a + ", object1: " + v(cmd.to1) + ", object2: " + v(cmd.to2) +
         ", property: " + v(cmd.ap) + ", relationship: " + v(cmd.p);
}

namespace detail {

inline std::string strip_value(std::string s) {
  auto junk = [](unsigned char c) {
    return std::isspace(c) || c == '`' || c == '"' || c == '\'' || c == '*' || c == '.';
  };
  while (!s.empty() && junk(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && junk(static_cast<unsigned char>(s[b]))) ++b;
  return s.substr(b);
}

inline std::optional<std::string> none_to_absent(std::string s) {
  s = strip_value(std::move(s));
  std::string lower = s;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s.empty() || lower == "none" || lower == "null" || lower == "n/a") return std::nullopt;
  return s;
}

}  // namespace detail

/// Extracts the last five-key output line from a free-form generation. The
/// model reasons first and answers last, so earlier matches are ignored.
/// Property maps to ap and relationship to p. Throws when no line matches.
inline SkillCommand parse_reasoner_output(std::string_view generation) {
  static const std::regex pattern(
      R"(action\s*:\s*([^,\n]*),\s*object1\s*:\s*([^,\n]*),\s*object2\s*:\s*([^,\n]*),)"
      R"(\s*property\s*:\s*([^,\n]*),\s*relationship\s*:\s*([^,\n`]*))",
      std::regex::icase | std::regex::ECMAScript);
  const std::string text(generation);
  std::smatch last;
  bool found = false;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern);
       it != std::sregex_iterator(); ++it) {
    last = *it;
    found = true;
  }
  if (!found) throw Error(ErrorKind::parse, "no 'action: ..., relationship: ...' line found");
  SkillCommand cmd;
  auto action = detail::none_to_absent(last[1].str());
  if (!action) throw Error(ErrorKind::parse, "output line has no action");
  cmd.a = *action;
  cmd.to1 = detail::none_to_absent(last[2].str());
  cmd.to2 = detail::none_to_absent(last[3].str());
  cmd.ap = detail::none_to_absent(last[4].str());
  cmd.p = detail::none_to_absent(last[5].str());
  return cmd;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const SkillCommand& cmd) {
  auto opt = [](const std::optional<std::string>& s) {
    return s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["ap"] = opt(cmd.ap);
  j["a"] = cmd.a;
  j["to1"] = opt(cmd.to1);
  j["p"] = opt(cmd.p);
  j["to2"] = opt(cmd.to2);
  return j;
}

inline SkillCommand command_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("a") || !j["a"].is_string()) {
    throw Error(ErrorKind::parse, "command record needs a string 'a'");
  }
  auto opt = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
  };
  return SkillCommand{opt("ap"), j["a"].get<std::string>(), opt("to1"), opt("p"), opt("to2")};
}

inline nlohmann::ordered_json to_json(const ActionRegistry& r) {
  nlohmann::ordered_json actions = nlohmann::ordered_json::array();
  for (const auto& a : r.actions()) {
    nlohmann::ordered_json ja;
    ja["name"] = a.name;
    ja["arity"] = to_string(a.arity);
    ja["prepositions"] = a.prepositions;
    actions.push_back(std::move(ja));
  }
  nlohmann::ordered_json j;
  j["actions"] = std::move(actions);
  j["properties"] = std::vector<std::string>(r.properties().begin(), r.properties().end());
  j["property_aliases"] =
      std::vector<std::string>(r.property_aliases().begin(), r.property_aliases().end());
  return j;
}

/// {"actions":[{"name":"pick","arity":"single","prepositions":[]}],
///  "properties":[...], "property_aliases":[...]}
inline ActionRegistry registry_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("actions") || !j["actions"].is_array()) {
    throw Error(ErrorKind::parse, "registry record needs an 'actions' array");
  }
  std::vector<ActionSpec> actions;
  for (const auto& ja : j["actions"]) {
    ActionSpec a;
    a.name = ja.at("name").get<std::string>();
    a.arity = arity_from_string(ja.at("arity").get<std::string>());
    if (ja.contains("prepositions")) a.prepositions = ja["prepositions"].get<std::vector<std::string>>();
    actions.push_back(std::move(a));
  }
  auto list = [&](const char* key) {
    return j.contains(key) ? j[key].get<std::vector<std::string>>() : std::vector<std::string>{};
  };
  return ActionRegistry(std::move(actions), list("properties"), list("property_aliases"));
}

}  // namespace fusemerge

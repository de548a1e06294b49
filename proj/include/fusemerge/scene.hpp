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
#include <charconv>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "fusemerge/error.hpp"
#include "fusemerge/random.hpp"

namespace fusemerge {

enum class Size { small, medium, large };
enum class Color { red, green, blue };
enum class State { open, closed, half_full };

inline constexpr std::array<Size, 3> kAllSizes{Size::small, Size::medium, Size::large};
inline constexpr std::array<Color, 3> kAllColors{Color::red, Color::green, Color::blue};
inline constexpr std::array<State, 3> kAllStates{State::open, State::closed, State::half_full};

inline const char* to_string(Size v) {
  switch (v) {
    case Size::small: return "small";
    case Size::medium: return "medium";
    case Size::large: return "large";
  }
  return "";
}

inline const char* to_string(Color v) {
  switch (v) {
    case Color::red: return "red";
    case Color::green: return "green";
    case Color::blue: return "blue";
  }
  return "";
}

inline const char* to_string(State v) {
  switch (v) {
    case State::open: return "open";
    case State::closed: return "closed";
    case State::half_full: return "half-full";
  }
  return "";
}

inline std::optional<Size> parse_size(std::string_view s) {
  for (auto v : kAllSizes) if (s == to_string(v)) return v;
  return std::nullopt;
}
inline std::optional<Color> parse_color(std::string_view s) {
  for (auto v : kAllColors) if (s == to_string(v)) return v;
  return std::nullopt;
}
inline std::optional<State> parse_state(std::string_view s) {
  for (auto v : kAllStates) if (s == to_string(v)) return v;
  return std::nullopt;
}

inline bool is_attribute_word(std::string_view s) {
  return parse_size(s) || parse_color(s) || parse_state(s);
}

struct ObjectProperties {
  std::optional<Size> size;
  std::optional<Color> color;
  std::optional<State> state;

  friend bool operator==(const ObjectProperties&, const ObjectProperties&) = default;
};

struct SceneObject {
  std::string id;    // instance name, e.g. "cup1"
  std::string type;  // class name, e.g. "cup"
  ObjectProperties properties;

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

/// Positive integer suffix of an instance id, or nullopt when `id` is not
/// `type` followed by digits.
inline std::optional<int> instance_index(std::string_view id, std::string_view type) {
  if (id.size() <= type.size() || id.substr(0, type.size()) != type) return std::nullopt;
  const auto digits = id.substr(type.size());
  if (digits.front() == '0') return std::nullopt;
  int value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || value < 1) {
    return std::nullopt;
  }
  return value;
}

class Scene {
 public:
  explicit Scene(std::vector<SceneObject> objects) : objects_(std::move(objects)) {
    if (objects_.empty()) throw Error(ErrorKind::invalid, "a scene needs at least one object");
    std::unordered_set<std::string_view> ids;
    for (const auto& o : objects_) {
      if (o.type.empty()) throw Error(ErrorKind::invalid, "object '" + o.id + "' has no type");
      if (!instance_index(o.id, o.type)) {
        throw Error(ErrorKind::invalid,
                    "object id '" + o.id + "' is not '" + o.type + "' plus a positive index");
      }
      if (!ids.insert(o.id).second) {
        throw Error(ErrorKind::invalid, "duplicate object id '" + o.id + "'");
      }
    }
  }

  std::span<const SceneObject> objects() const noexcept { return objects_; }
  std::size_t size() const noexcept { return objects_.size(); }

  const SceneObject* find(std::string_view id) const noexcept {
    for (const auto& o : objects_) if (o.id == id) return &o;
    return nullptr;
  }

  bool contains(std::string_view id) const noexcept { return find(id) != nullptr; }

  bool has_type(std::string_view type) const noexcept {
    return std::any_of(objects_.begin(), objects_.end(),
                       [&](const SceneObject& o) { return o.type == type; });
  }

  /// Instances of `type` ordered by their numeric index.
  std::vector<const SceneObject*> instances_of(std::string_view type) const {
    std::vector<const SceneObject*> out;
    for (const auto& o : objects_) if (o.type == type) out.push_back(&o);
    std::sort(out.begin(), out.end(), [](const SceneObject* a, const SceneObject* b) {
      return *instance_index(a->id, a->type) < *instance_index(b->id, b->type);
    });
    return out;
  }

  /// Distinct class names in order of first appearance.
  std::vector<std::string> types() const {
    std::vector<std::string> out;
    for (const auto& o : objects_) {
      if (std::find(out.begin(), out.end(), o.type) == out.end()) out.push_back(o.type);
    }
    return out;
  }

  friend bool operator==(const Scene&, const Scene&) = default;

 private:
  std::vector<SceneObject> objects_;
};

/// "<id> is a <size> <color> <type>." per object, absent properties left out.
inline std::string render_scene_description(const Scene& scene) {
  std::string out;
  for (const auto& o : scene.objects()) {
    if (!out.empty()) out += ' ';
    out += o.id;
    out += " is a ";
    if (o.properties.size) { out += to_string(*o.properties.size); out += ' '; }
    if (o.properties.color) { out += to_string(*o.properties.color); out += ' '; }
    out += o.type;
    out += '.';
  }
  return out;
}

namespace detail {

inline bool is_filler_query_word(std::string_view w) {
  static constexpr std::array<std::string_view, 8> kIgnored{
      "the", "a", "an", "object", "objects", "thing", "one", "item"};
  return std::find(kIgnored.begin(), kIgnored.end(), w) != kIgnored.end();
}

}  // namespace detail

/// Objects matching the class and attribute words in `tokens`. With no class
/// word every type matches; each attribute word narrows the result. Instance
/// ids select themselves. Unknown words are ignored with a warning.
inline std::vector<SceneObject> ground_class(const Scene& scene,
                                             std::span<const std::string> tokens) {
  std::vector<std::string_view> classes;
  std::vector<std::string_view> ids;
  std::optional<Size> size;
  std::optional<Color> color;
  std::optional<State> state;
  bool contradictory = false;
  auto narrow = [&](auto& slot, auto value) {
    if (slot && *slot != value) contradictory = true;
    slot = value;
  };

  for (const auto& tok : tokens) {
    if (auto v = parse_size(tok)) { narrow(size, *v); continue; }
    if (auto v = parse_color(tok)) { narrow(color, *v); continue; }
    if (auto v = parse_state(tok)) { narrow(state, *v); continue; }
    if (scene.contains(tok)) { ids.push_back(tok); continue; }
    if (scene.has_type(tok)) { classes.push_back(tok); continue; }
    if (detail::is_filler_query_word(tok)) continue;
    warn("ground_class: ignoring unknown word '" + tok + "'");
  }

  std::vector<SceneObject> out;
  if (contradictory) return out;
  for (const auto& o : scene.objects()) {
    if (!classes.empty() &&
        std::find(classes.begin(), classes.end(), o.type) == classes.end()) continue;
    if (!ids.empty() && std::find(ids.begin(), ids.end(), o.id) == ids.end()) continue;
    if (size && o.properties.size != size) continue;
    if (color && o.properties.color != color) continue;
    if (state && o.properties.state != state) continue;
    out.push_back(o);
  }
  return out;
}

inline std::vector<SceneObject> ground_class(const Scene& scene, std::string_view query) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(query)};
  for (std::string w; in >> w;) tokens.push_back(w);
  return ground_class(scene, tokens);
}

// ---------------------------------------------------------------------------
// Random scenes

/// Object classes of the simulated tabletop.
inline std::vector<std::string> simulated_object_classes() {
  return {"cup",  "cube",   "plate", "table", "can",  "box",   "fork",    "marker",
          "note", "storage", "blade", "rack",  "ledge", "stand", "platform"};
}

struct SceneConfig {
  std::vector<std::string> classes = simulated_object_classes();
  std::size_t min_objects = 3;
  std::size_t max_objects = 5;
  bool unique_types = false;  // at most one instance per class
};

inline SceneObject random_object(std::string type, int index, Rng& rng) {
  SceneObject o;
  o.id = type + std::to_string(index);
  o.type = std::move(type);
  o.properties.size = kAllSizes[rng.index(kAllSizes.size())];
  o.properties.color = kAllColors[rng.index(kAllColors.size())];
  o.properties.state = kAllStates[rng.index(kAllStates.size())];
  return o;
}

/// Draws a scene: object count uniform in [min, max], classes uniform (with
/// replacement unless `unique_types`), ids numbered per class from 1, every
/// property uniform over its value set.
inline Scene sample_scene(const SceneConfig& config, Rng& rng) {
  if (config.classes.empty()) throw Error(ErrorKind::config, "scene class list is empty");
  if (config.min_objects < 1 || config.min_objects > config.max_objects) {
    throw Error(ErrorKind::config, "scene object count range is empty");
  }
  if (config.unique_types && config.min_objects > config.classes.size()) {
    throw Error(ErrorKind::config, "not enough classes for a scene of unique types");
  }
  auto count = static_cast<std::size_t>(rng.integer(
      static_cast<std::int64_t>(config.min_objects), static_cast<std::int64_t>(config.max_objects)));
  std::vector<std::string> pool = config.classes;
  if (config.unique_types) count = std::min(count, pool.size());

  std::map<std::string, int> counters;
  std::vector<SceneObject> objects;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = rng.index(pool.size());
    std::string type = pool[k];
    if (config.unique_types) pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
    const int index = ++counters[type];
    objects.push_back(random_object(std::move(type), index, rng));
  }
  return Scene(std::move(objects));
}

// ---------------------------------------------------------------------------
// JSON:  {"objects":[{"id":"cup1","type":"cup","properties":{"size":"medium","color":"red"}}]}

inline nlohmann::ordered_json to_json(const Scene& scene) {
  nlohmann::ordered_json objs = nlohmann::ordered_json::array();
  for (const auto& o : scene.objects()) {
    nlohmann::ordered_json props = nlohmann::ordered_json::object();
    if (o.properties.size) props["size"] = to_string(*o.properties.size);
    if (o.properties.color) props["color"] = to_string(*o.properties.color);
    if (o.properties.state) props["state"] = to_string(*o.properties.state);
    nlohmann::ordered_json j;
    j["id"] = o.id;
    j["type"] = o.type;
    j["properties"] = std::move(props);
    objs.push_back(std::move(j));
  }
  nlohmann::ordered_json j;
  j["objects"] = std::move(objs);
  return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("objects") || !j["objects"].is_array()) {
    throw Error(ErrorKind::parse, "scene record needs an 'objects' array");
  }
  std::vector<SceneObject> objects;
  for (const auto& jo : j["objects"]) {
    if (!jo.is_object() || !jo.contains("id") || !jo.contains("type")) {
      throw Error(ErrorKind::parse, "scene object needs 'id' and 'type'");
    }
    SceneObject o;
    o.id = jo["id"].get<std::string>();
    o.type = jo["type"].get<std::string>();
    if (jo.contains("properties")) {
      for (const auto& [key, value] : jo["properties"].items()) {
        const auto text = value.get<std::string>();
        auto bad = [&] {
          return Error(ErrorKind::parse,
                       "object '" + o.id + "': invalid " + key + " '" + text + "'");
        };
        if (key == "size") {
          o.properties.size = parse_size(text);
          if (!o.properties.size) throw bad();
        } else if (key == "color") {
          o.properties.color = parse_color(text);
          if (!o.properties.color) throw bad();
        } else if (key == "state") {
          o.properties.state = parse_state(text);
          if (!o.properties.state) throw bad();
        } else {
          throw Error(ErrorKind::parse, "object '" + o.id + "': unknown property '" + key + "'");
        }
      }
    }
    objects.push_back(std::move(o));
  }
  return Scene(std::move(objects));
}

}  // namespace fusemerge

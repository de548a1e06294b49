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
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fusemerge/error.hpp"
#include "fusemerge/lattice.hpp"
#include "fusemerge/random.hpp"
#include "fusemerge/scene.hpp"
#include "fusemerge/skill_command.hpp"

namespace fusemerge {

struct NoiseParams {
  double phonetic = 0.0;               // probability a confusable word is demoted
  double filler = 0.0;                 // probability of a filler in each word gap
  double align = 0.0;                  // gesture delay ~ U(0, 2 * align) seconds
  double truncation = 0.0;             // probability the sentence loses a suffix
  double similarity_threshold = 60.0;  // confusable when similarity exceeds this

  void check() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorKind::usage, std::string(name) + " must lie in [0, 1]");
      }
    };
    unit(phonetic, "phonetic noise");
    unit(filler, "filler probability");
    unit(truncation, "truncation probability");
    if (!(align >= 0.0 && std::isfinite(align))) {
      throw Error(ErrorKind::usage, "alignment noise must be a finite value >= 0");
    }
    if (!(similarity_threshold >= 0.0 && similarity_threshold <= 100.0)) {
      throw Error(ErrorKind::usage, "similarity threshold must lie in [0, 100]");
    }
  }

  friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

/// Character-set Jaccard similarity scaled to [0, 100].
inline double similarity(std::string_view w1, std::string_view w2) {
  if (w1.empty() || w2.empty()) throw Error(ErrorKind::usage, "similarity of an empty word");
  std::array<bool, 256> in1{}, in2{};
  for (unsigned char c : w1) in1[c] = true;
  for (unsigned char c : w2) in2[c] = true;
  int inter = 0, uni = 0;
  for (std::size_t c = 0; c < 256; ++c) {
    inter += in1[c] && in2[c];
    uni += in1[c] || in2[c];
  }
  return 100.0 * inter / uni;
}

/// Vocabulary words other than `word` whose similarity exceeds `threshold`,
/// in vocabulary order.
inline std::vector<std::pair<std::string, double>> confusables(
    std::string_view word, std::span<const std::string> vocab, double threshold) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& v : vocab) {
    if (v == word) continue;
    const double s = similarity(word, v);
    if (s > threshold) out.emplace_back(v, s);
  }
  return out;
}

/// Candidate distribution for a spoken word. With probability
/// `params.phonetic`, and when confusable words exist, the true word keeps
/// a weight drawn from U(0.5, 0.9) and the confusables split the rest in
/// proportion to their similarity. Otherwise the word is certain.
/// Consumes exactly two draws.
inline std::vector<Candidate> apply_phonetic_noise(std::string_view word,
                                                   std::span<const std::string> vocab,
                                                   const NoiseParams& params, Rng& rng) {
  const bool substitute = rng.bernoulli(params.phonetic);
  const double true_weight = rng.uniform(0.5, 0.9);
  if (!substitute) return {{std::string(word), 1.0}};
  auto conf = confusables(word, vocab, params.similarity_threshold);
  if (conf.empty()) return {{std::string(word), 1.0}};
  double total = 0.0;
  for (const auto& [w, s] : conf) total += s;
  std::vector<Candidate> out{{std::string(word), true_weight}};
  for (const auto& [w, s] : conf) out.push_back({w, (1.0 - true_weight) * s / total});
  return out;
}

inline std::vector<std::string> default_fillers() {
  return {"ah", "uh", "like", "well", "so", "hmm"};
}

/// With probability `params.filler` per gap between consecutive words, adds
/// one filler word (uniform over `fillers`) at the gap midpoint, weight 1.
inline std::vector<TimedWord> insert_fillers(std::span<const TimedWord> words,
                                             std::span<const std::string> fillers,
                                             const NoiseParams& params, Rng& rng) {
  std::vector<TimedWord> out;
  out.reserve(words.size() * 2);
  for (std::size_t i = 0; i < words.size(); ++i) {
    out.push_back(words[i]);
    if (i + 1 == words.size()) break;
    const bool insert = rng.bernoulli(params.filler);
    const std::size_t pick = fillers.empty() ? 0 : rng.index(fillers.size());
    if (insert && !fillers.empty()) {
      const double mid = 0.5 * (words[i].timestamp() + words[i + 1].timestamp());
      out.emplace_back(mid, std::vector<Candidate>{{fillers[pick], 1.0}});
    }
  }
  return out;
}

/// With probability `params.truncation`, drops a suffix of 1..n-1 words
/// (uniform). The result is always a non-empty prefix.
inline std::vector<TimedWord> truncate(std::span<const TimedWord> words,
                                       const NoiseParams& params, Rng& rng) {
  std::vector<TimedWord> out(words.begin(), words.end());
  if (words.size() < 2) return out;
  const bool cut = rng.bernoulli(params.truncation);
  const auto drop = static_cast<std::size_t>(rng.integer(1, static_cast<std::int64_t>(words.size()) - 1));
  if (cut) out.erase(out.end() - static_cast<std::ptrdiff_t>(drop), out.end());
  return out;
}

struct GestureModel {
  double correct_low = 0.6, correct_high = 0.95;
  double similar_low = 0.2, similar_high = 0.8;
  double floor = 0.01;  // weight of every unrelated object
};

/// One pointing gesture per object referenced by `ground_truth`. The
/// intended instance scores U(0.6, 0.95), other instances of the same class
/// U(0.2, 0.8), everything else the floor weight. The gesture lands at
/// anchor + eps with eps ~ U(0, 2 * params.align); a missing anchor (the
/// object word was cut from the speech) is replaced by `fallback_time`.
inline ModalitySentence generate_gesture_sentence(const SkillCommand& ground_truth,
                                                  const Scene& scene,
                                                  std::array<std::optional<double>, 2> anchors,
                                                  double fallback_time, const NoiseParams& params,
                                                  Rng& rng, const GestureModel& model = {}) {
  std::vector<TimedWord> words;
  const std::array<const std::optional<std::string>*, 2> refs{&ground_truth.to1, &ground_truth.to2};
  for (std::size_t k = 0; k < 2; ++k) {
    if (!*refs[k]) continue;
    const SceneObject* target = scene.find(**refs[k]);
    if (!target) {
      throw Error(ErrorKind::config, "ground truth object '" + **refs[k] + "' is not in the scene");
    }
    std::vector<Candidate> cands;
    for (const auto& o : scene.objects()) {
      double w = model.floor;
      if (o.id == target->id) {
        w = rng.uniform(model.correct_low, model.correct_high);
      } else if (o.type == target->type) {
        w = rng.uniform(model.similar_low, model.similar_high);
      }
      cands.push_back({o.id, w});
    }
    const double eps = rng.uniform01() * 2.0 * params.align;
    words.emplace_back(anchors[k].value_or(fallback_time) + eps, std::move(cands));
  }
  std::stable_sort(words.begin(), words.end(), [](const TimedWord& x, const TimedWord& y) {
    return x.timestamp() < y.timestamp();
  });
  return ModalitySentence(Modality::gesture, std::move(words));
}

/// Same, locating anchors in `voice`: the first word whose top candidate
/// names the referenced object (instance, class, deictic or "object"), the
/// second search starting after the first hit. Missing anchors fall back to
/// the voice sentence midpoint.
inline ModalitySentence generate_gesture_sentence(const SkillCommand& ground_truth,
                                                  const Scene& scene,
                                                  const ModalitySentence& voice,
                                                  const NoiseParams& params, Rng& rng,
                                                  const GestureModel& model = {}) {
  std::array<std::optional<double>, 2> anchors;
  std::size_t from = 0;
  const std::array<const std::optional<std::string>*, 2> refs{&ground_truth.to1, &ground_truth.to2};
  const auto words = voice.words();
  for (std::size_t k = 0; k < 2; ++k) {
    if (!*refs[k]) continue;
    const SceneObject* target = scene.find(**refs[k]);
    for (std::size_t i = from; i < words.size(); ++i) {
      const auto& tok = words[i].best().token;
      if ((target && (tok == target->id || tok == target->type)) || tok == "object" ||
          tok == "this" || tok == "that") {
        anchors[k] = words[i].timestamp();
        from = i + 1;
        break;
      }
    }
  }
  const double mid =
      voice.empty() ? 0.0 : 0.5 * (words.front().timestamp() + words.back().timestamp());
  return generate_gesture_sentence(ground_truth, scene, anchors, mid, params, rng, model);
}

// ---------------------------------------------------------------------------
// Generator configuration and scenario presets

/// t1: "pick cube"; t2: "pick the red object" with two red objects;
/// t3: "put cube to box"; t4: "put this to that".
enum class Scenario { none, t1, t2, t3, t4 };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::none: return "none";
    case Scenario::t1: return "t1";
    case Scenario::t2: return "t2";
    case Scenario::t3: return "t3";
    case Scenario::t4: return "t4";
  }
  return "";
}

inline Scenario scenario_from_string(std::string_view s) {
  for (auto v : {Scenario::none, Scenario::t1, Scenario::t2, Scenario::t3, Scenario::t4}) {
    if (s == to_string(v)) return v;
  }
  throw Error(ErrorKind::usage, "unknown scenario '" + std::string(s) + "'");
}

/// The standard registry, with "to" also accepted by put in the scenarios
/// whose utterance uses it.
inline ActionRegistry registry_for(Scenario s) {
  auto reg = ActionRegistry::standard();
  if (s == Scenario::t3 || s == Scenario::t4) {
    reg = reg.with_action({"put", Arity::two, {"into", "onto", "to"}});
  }
  return reg;
}

/// Near-homophones by character overlap, used only as confusion targets.
inline std::vector<std::string> distractor_words() {
  return {"kick", "hush", "asp",  "pale", "lace", "pint",  "print", "pen",  "nope",
          "sole", "our",  "proud", "putt", "spot", "post", "lease", "hoe",  "pup",
          "cub",  "bleat", "able", "ox",   "clan", "quick", "lowly", "tone", "stow"};
}

/// Every word the simulated speaker and recognizer know.
inline std::vector<std::string> default_vocabulary(const ActionRegistry& registry,
                                                   std::span<const std::string> classes,
                                                   std::span<const std::string> fillers) {
  std::set<std::string> words;
  for (const auto& a : registry.actions()) {
    words.insert(a.name);
    words.insert(a.prepositions.begin(), a.prepositions.end());
  }
  words.insert(registry.properties().begin(), registry.properties().end());
  words.insert(classes.begin(), classes.end());
  for (auto v : kAllSizes) words.insert(to_string(v));
  for (auto v : kAllColors) words.insert(to_string(v));
  for (auto v : kAllStates) words.insert(to_string(v));
  for (const char* w : {"the", "object", "this", "that", "to"}) words.insert(w);
  words.insert(fillers.begin(), fillers.end());
  for (auto& w : distractor_words()) words.insert(std::move(w));
  return {words.begin(), words.end()};
}

struct GeneratorConfig {
  Scenario scenario = Scenario::none;
  ActionRegistry registry = ActionRegistry::standard();
  SceneConfig scene;
  std::vector<std::string> fillers = default_fillers();
  std::vector<std::string> vocabulary;  // empty: default_vocabulary()
  double word_spacing = 0.2;            // seconds between clean words
  double property_probability = 1.0;    // chance the command carries an action parameter
  GestureModel gesture;

  static GeneratorConfig for_scenario(Scenario s) {
    GeneratorConfig c;
    c.scenario = s;
    c.registry = registry_for(s);
    return c;
  }

  std::vector<std::string> effective_vocabulary() const {
    if (!vocabulary.empty()) return vocabulary;
    return default_vocabulary(registry, scene.classes, fillers);
  }
};

struct DatasetSample {
  std::uint64_t sample_id = 0;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::none;
  NoiseParams params;
  Scene scene{{SceneObject{"box1", "box", {}}}};
  SkillCommand ground_truth;
  ModalitySentence voice{Modality::voice};
  ModalitySentence gesture{Modality::gesture};

  friend bool operator==(const DatasetSample&, const DatasetSample&) = default;
};

namespace detail {

struct CleanWord {
  std::string token;
  int ref = 0;  // 1 or 2 when the word names to1 or to2
};

inline std::vector<std::string> classes_except(const std::vector<std::string>& classes,
                                               std::initializer_list<std::string_view> drop) {
  std::vector<std::string> out;
  for (const auto& c : classes) {
    if (std::find(drop.begin(), drop.end(), c) == drop.end()) out.push_back(c);
  }
  return out;
}

// Appends `count` random objects drawn from `pool`, numbering per class.
inline void add_random_objects(std::vector<SceneObject>& objects, std::size_t count,
                               const std::vector<std::string>& pool, Rng& rng,
                               std::optional<Color> avoid_color = std::nullopt) {
  if (pool.empty()) return;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& type = pool[rng.index(pool.size())];
    int index = 1;
    for (const auto& o : objects) if (o.type == type) ++index;
    auto o = random_object(type, index, rng);
    if (avoid_color && o.properties.color == avoid_color) {
      std::vector<Color> others;
      for (auto c : kAllColors) if (c != *avoid_color) others.push_back(c);
      o.properties.color = others[rng.index(others.size())];
    }
    objects.push_back(std::move(o));
  }
}

inline std::size_t object_count(const SceneConfig& sc, Rng& rng, std::size_t at_least) {
  const auto lo = std::max(sc.min_objects, at_least);
  const auto hi = std::max(sc.max_objects, lo);
  return static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(lo),
                                              static_cast<std::int64_t>(hi)));
}

inline void require_class(const std::vector<std::string>& classes, std::string_view c) {
  if (std::find(classes.begin(), classes.end(), c) == classes.end()) {
    throw Error(ErrorKind::config, "scenario needs class '" + std::string(c) + "'");
  }
}

struct Draft {
  Scene scene;
  SkillCommand command;
  std::vector<CleanWord> words;
};

inline Draft draft_general(const GeneratorConfig& cfg, Rng& scene_rng, Rng& cmd_rng) {
  Scene scene = sample_scene(cfg.scene, scene_rng);
  const auto actions = cfg.registry.actions();
  const ActionSpec& spec = actions[cmd_rng.index(actions.size())];
  const bool with_property = cmd_rng.bernoulli(cfg.property_probability);
  const auto props = cfg.registry.properties();
  const std::size_t prop_pick = props.empty() ? 0 : cmd_rng.index(props.size());
  const std::size_t needed = spec.arity == Arity::zero ? 0 : spec.arity == Arity::one ? 1 : 2;
  if (scene.size() < needed) {
    throw Error(ErrorKind::config, "action '" + spec.name + "' needs " + std::to_string(needed) +
                                       " objects but the scene has " + std::to_string(scene.size()));
  }
  SkillCommand cmd;
  cmd.a = spec.name;
  std::vector<CleanWord> words;
  if (with_property && !props.empty()) {
    cmd.ap = props[prop_pick];
    words.push_back({*cmd.ap, 0});
  }
  words.push_back({spec.name, 0});
  if (needed >= 1) {
    const auto& o1 = scene.objects()[cmd_rng.index(scene.size())];
    cmd.to1 = o1.id;
    words.push_back({o1.type, 1});
  }
  if (needed == 2) {
    std::size_t k = cmd_rng.index(scene.size() - 1);
    const auto objs = scene.objects();
    if (objs[k].id == *cmd.to1) k = scene.size() - 1;
    cmd.p = spec.prepositions[cmd_rng.index(spec.prepositions.size())];
    cmd.to2 = objs[k].id;
    words.push_back({*cmd.p, 0});
    words.push_back({objs[k].type, 2});
  }
  return {std::move(scene), std::move(cmd), std::move(words)};
}

inline Draft draft_scenario(const GeneratorConfig& cfg, Rng& scene_rng, Rng& cmd_rng) {
  const auto& classes = cfg.scene.classes;
  std::vector<SceneObject> objects;
  SkillCommand cmd;
  std::vector<CleanWord> words;
  switch (cfg.scenario) {
    case Scenario::t1: {
      require_class(classes, "cube");
      objects.push_back(random_object("cube", 1, scene_rng));
      add_random_objects(objects, object_count(cfg.scene, scene_rng, 1) - 1,
                         classes_except(classes, {"cube"}), scene_rng);
      cmd = {std::nullopt, "pick", "cube1", std::nullopt, std::nullopt};
      words = {{"pick", 0}, {"cube", 1}};
      break;
    }
    case Scenario::t2: {
      if (classes.size() < 2) throw Error(ErrorKind::config, "t2 needs at least two classes");
      const std::size_t a = scene_rng.index(classes.size());
      std::size_t b = scene_rng.index(classes.size() - 1);
      if (b == a) b = classes.size() - 1;
      for (std::size_t k : {a, b}) {
        auto o = random_object(classes[k], 1, scene_rng);
        o.properties.color = Color::red;
        objects.push_back(std::move(o));
      }
      add_random_objects(objects, object_count(cfg.scene, scene_rng, 2) - 2,
                         classes_except(classes, {classes[a], classes[b]}), scene_rng, Color::red);
      cmd = {std::nullopt, "pick", objects[cmd_rng.index(2)].id, std::nullopt, std::nullopt};
      words = {{"pick", 0}, {"the", 0}, {"red", 0}, {"object", 1}};
      break;
    }
    case Scenario::t3: {
      require_class(classes, "cube");
      require_class(classes, "box");
      objects.push_back(random_object("cube", 1, scene_rng));
      objects.push_back(random_object("box", 1, scene_rng));
      add_random_objects(objects, object_count(cfg.scene, scene_rng, 2) - 2,
                         classes_except(classes, {"cube", "box"}), scene_rng);
      cmd = {std::nullopt, "put", "cube1", "to", "box1"};
      words = {{"put", 0}, {"cube", 1}, {"to", 0}, {"box", 2}};
      break;
    }
    case Scenario::t4: {
      auto sc = cfg.scene;
      sc.min_objects = std::max<std::size_t>(sc.min_objects, 2);
      sc.max_objects = std::max(sc.max_objects, sc.min_objects);
      Scene scene = sample_scene(sc, scene_rng);
      objects.assign(scene.objects().begin(), scene.objects().end());
      const std::size_t i = cmd_rng.index(objects.size());
      std::size_t j = cmd_rng.index(objects.size() - 1);
      if (j == i) j = objects.size() - 1;
      cmd = {std::nullopt, "put", objects[i].id, "to", objects[j].id};
      words = {{"put", 0}, {"this", 1}, {"to", 0}, {"that", 2}};
      break;
    }
    case Scenario::none: break;
  }
  return {Scene(std::move(objects)), std::move(cmd), std::move(words)};
}

}  // namespace detail

/// One synthetic sample: scene, ground-truth command, its clean utterance
/// with words every `word_spacing` seconds, phonetic noise, fillers and
/// truncation on the voice channel, and pointing gestures anchored on the
/// object words. Each stage draws from its own stream, so changing a noise
/// level leaves the scene, the command and the other stages' draws alone.
inline DatasetSample generate_sample(const NoiseParams& params, const GeneratorConfig& config,
                                     Rng& rng) {
  params.check();
  Rng scene_rng = rng.fork();
  Rng cmd_rng = rng.fork();
  Rng phon_rng = rng.fork();
  Rng filler_rng = rng.fork();
  Rng trunc_rng = rng.fork();
  Rng gesture_rng = rng.fork();

  detail::Draft draft = config.scenario == Scenario::none
                            ? detail::draft_general(config, scene_rng, cmd_rng)
                            : detail::draft_scenario(config, scene_rng, cmd_rng);

  const auto vocab = config.effective_vocabulary();
  std::vector<TimedWord> clean;
  std::array<std::optional<double>, 2> anchors;
  for (std::size_t i = 0; i < draft.words.size(); ++i) {
    const double t = static_cast<double>(i) * config.word_spacing;
    clean.emplace_back(t, apply_phonetic_noise(draft.words[i].token, vocab, params, phon_rng));
    if (draft.words[i].ref > 0) anchors[draft.words[i].ref - 1] = t;
  }
  auto noisy = insert_fillers(clean, config.fillers, params, filler_rng);
  noisy = truncate(noisy, params, trunc_rng);

  // Anchors whose word was cut fall back to the midpoint of what was said.
  const double last = noisy.back().timestamp();
  for (auto& a : anchors) {
    if (a && *a > last) a.reset();
  }
  const double mid = 0.5 * (noisy.front().timestamp() + last);

  DatasetSample out;
  out.scenario = config.scenario;
  out.params = params;
  out.gesture = generate_gesture_sentence(draft.command, draft.scene, anchors, mid, params,
                                          gesture_rng, config.gesture);
  out.voice = ModalitySentence(Modality::voice, std::move(noisy));
  out.scene = std::move(draft.scene);
  out.ground_truth = std::move(draft.command);
  return out;
}

/// Sample `id` of a dataset is generated from mix_seed(seed, id), so any
/// sample can be regenerated alone and datasets that differ only in noise
/// share scenes and commands.
inline DatasetSample generate_sample_at(const NoiseParams& params, const GeneratorConfig& config,
                                        std::uint64_t seed, std::uint64_t id) {
  const std::uint64_t sample_seed = mix_seed(seed, id);
  Rng rng(sample_seed);
  auto s = generate_sample(params, config, rng);
  s.sample_id = id;
  s.seed = sample_seed;
  return s;
}

inline std::vector<DatasetSample> generate_dataset(const NoiseParams& params,
                                                   const GeneratorConfig& config,
                                                   std::size_t count, std::uint64_t seed) {
  std::vector<DatasetSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_sample_at(params, config, seed, i));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset JSONL: one sample per line.

inline nlohmann::ordered_json to_json(const NoiseParams& p) {
  nlohmann::ordered_json j;
  j["phonetic"] = p.phonetic;
  j["filler"] = p.filler;
  j["align"] = p.align;
  j["truncation"] = p.truncation;
  j["similarity_threshold"] = p.similarity_threshold;
  return j;
}

inline NoiseParams noise_params_from_json(const nlohmann::json& j) {
  NoiseParams p;
  p.phonetic = j.value("phonetic", 0.0);
  p.filler = j.value("filler", 0.0);
  p.align = j.value("align", 0.0);
  p.truncation = j.value("truncation", 0.0);
  p.similarity_threshold = j.value("similarity_threshold", 60.0);
  return p;
}

inline nlohmann::ordered_json to_json(const DatasetSample& s) {
  nlohmann::ordered_json j;
  j["sample_id"] = s.sample_id;
  j["seed"] = s.seed;
  j["scenario"] = to_string(s.scenario);
  j["params"] = to_json(s.params);
  j["scene"] = to_json(s.scene);
  j["ground_truth"] = to_json(s.ground_truth);
  j["voice"] = to_json(s.voice);
  j["gesture"] = to_json(s.gesture);
  return j;
}

inline DatasetSample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::parse, "dataset line is not an object");
  for (const char* key : {"scene", "ground_truth", "voice", "gesture"}) {
    if (!j.contains(key)) throw Error(ErrorKind::parse, std::string("dataset line lacks '") + key + "'");
  }
  DatasetSample s;
  s.sample_id = j.value("sample_id", std::uint64_t{0});
  s.seed = j.value("seed", std::uint64_t{0});
  s.scenario = scenario_from_string(j.value("scenario", std::string("none")));
  if (j.contains("params")) s.params = noise_params_from_json(j["params"]);
  s.scene = scene_from_json(j["scene"]);
  s.ground_truth = command_from_json(j["ground_truth"]);
  s.voice = sentence_from_json(j["voice"]);
  s.gesture = sentence_from_json(j["gesture"]);
  return s;
}

inline void write_dataset_jsonl(std::ostream& out, std::span<const DatasetSample> samples) {
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

inline std::vector<DatasetSample> read_dataset_jsonl(std::istream& in) {
  std::vector<DatasetSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse, "dataset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fusemerge

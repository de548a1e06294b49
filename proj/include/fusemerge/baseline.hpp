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
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fusemerge/error.hpp"
#include "fusemerge/lattice.hpp"
#include "fusemerge/scene.hpp"
#include "fusemerge/skill_command.hpp"

namespace fusemerge {

enum class Slot { ap, a, to1, p, to2 };

inline const char* to_string(Slot s) {
  switch (s) {
    case Slot::ap: return "ap";
    case Slot::a: return "a";
    case Slot::to1: return "to1";
    case Slot::p: return "p";
    case Slot::to2: return "to2";
  }
  return "";
}

struct SlotAssignment {
  Slot slot;
  std::string token;  // the value written into the slot
  double timestamp;   // time of the word it came from

  friend bool operator==(const SlotAssignment&, const SlotAssignment&) = default;
};

struct DecodeResult {
  SkillCommand command;
  std::vector<SlotAssignment> trace;  // each slot at most once
};

inline nlohmann::ordered_json to_json(const DecodeResult& r) {
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const auto& s : r.trace) {
    trace.push_back({{"slot", to_string(s.slot)}, {"token", s.token}, {"t", s.timestamp}});
  }
  nlohmann::ordered_json j;
  j["command"] = to_json(r.command);
  j["trace"] = std::move(trace);
  return j;
}

namespace detail {

// Instance named by an object token: the id itself, or the lowest-index
// instance of a class.
inline std::optional<std::string> ground_lowest(const Scene& scene, std::string_view tok) {
  if (scene.contains(tok)) return std::string(tok);
  auto inst = scene.instances_of(tok);
  if (inst.empty()) return std::nullopt;
  return inst.front()->id;
}

inline std::optional<std::string>& slot_ref(SkillCommand& cmd, Slot s) {
  switch (s) {
    case Slot::ap: return cmd.ap;
    case Slot::to1: return cmd.to1;
    case Slot::p: return cmd.p;
    case Slot::to2: return cmd.to2;
    case Slot::a: break;
  }
  throw Error(ErrorKind::invalid, "slot a is not optional");
}

// Drops slots the action's arity forbids.
inline void project_to_arity(DecodeResult& r, const ActionSpec& spec) {
  std::vector<Slot> drop;
  if (spec.arity != Arity::two) drop = {Slot::p, Slot::to2};
  if (spec.arity == Arity::zero) drop.push_back(Slot::to1);
  for (Slot s : drop) slot_ref(r.command, s).reset();
  std::erase_if(r.trace, [&](const SlotAssignment& x) {
    return std::find(drop.begin(), drop.end(), x.slot) != drop.end();
  });
}

}  // namespace detail

/// Greedy baseline. Each word is read as its top candidate; walking in time
/// order, a token fills the first free slot of its category, tested in the
/// order property, action, object, preposition. The first object fills to1;
/// to2 takes the first object after the preposition. Class names ground to
/// the lowest-index instance. Slots the action's arity forbids are cleared
/// at the end. Throws when no action word is present.
inline DecodeResult argmax_decode(const MergedSentence& s, const ActionRegistry& registry,
                                  const Scene& scene) {
  if (s.empty()) throw Error(ErrorKind::usage, "cannot decode an empty sentence");
  DecodeResult r;
  bool have_action = false;
  for (const auto& mw : s.words()) {
    const std::string& tok = mw.word.best().token;
    const double t = mw.word.timestamp();
    if (registry.is_property(tok)) {
      if (!r.command.ap) {
        r.command.ap = tok;
        r.trace.push_back({Slot::ap, tok, t});
      }
    } else if (registry.is_action(tok)) {
      if (!have_action) {
        r.command.a = tok;
        have_action = true;
        r.trace.push_back({Slot::a, tok, t});
      }
    } else if (auto inst = detail::ground_lowest(scene, tok)) {
      if (!r.command.to1) {
        r.command.to1 = *inst;
        r.trace.push_back({Slot::to1, *inst, t});
      } else if (r.command.p && !r.command.to2) {
        r.command.to2 = *inst;
        r.trace.push_back({Slot::to2, *inst, t});
      }
    } else if (registry.is_preposition(tok)) {
      if (!r.command.p) {
        r.command.p = tok;
        r.trace.push_back({Slot::p, tok, t});
      }
    }
  }
  if (!have_action) throw Error(ErrorKind::decode, "no action word in the sentence");
  detail::project_to_arity(r, *registry.find(r.command.a));
  return r;
}

// ---------------------------------------------------------------------------
// Heuristic resolver

struct HeuristicOptions {
  double deictic_window = 2.0;         // seconds between a mention and a usable gesture
  double min_property_evidence = 0.5;  // summed weight needed to emit an action parameter
};

inline bool is_deictic_word(std::string_view w) {
  return w == "this" || w == "that" || w == "it" || w == "there" || w == "these" || w == "those";
}

namespace detail {

struct Evidence {
  double weight = 0.0;
  std::size_t first_index = 0;
  std::size_t best_index = 0;  // word contributing the most weight
  double best_weight = 0.0;
};

template <class Pred>
std::map<std::string, Evidence> collect_evidence(const MergedSentence& s, Pred accept) {
  std::map<std::string, Evidence> out;
  const auto words = s.words();
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (const auto& c : words[i].word.candidates()) {
      if (!accept(c.token)) continue;
      auto [it, fresh] = out.try_emplace(c.token);
      auto& e = it->second;
      if (fresh) e.first_index = i;
      e.weight += c.weight;
      if (c.weight > e.best_weight) {
        e.best_weight = c.weight;
        e.best_index = i;
      }
    }
  }
  return out;
}

// Highest total weight; ties go to the earliest appearance, then by token.
inline std::optional<std::pair<std::string, Evidence>> strongest(
    const std::map<std::string, Evidence>& ev) {
  std::optional<std::pair<std::string, Evidence>> best;
  for (const auto& [tok, e] : ev) {
    if (!best || e.weight > best->second.weight ||
        (e.weight == best->second.weight && e.first_index < best->second.first_index)) {
      best = std::make_pair(tok, e);
    }
  }
  return best;
}

struct Mention {
  std::vector<std::string> candidates;  // instance ids
  std::size_t index = 0;                // word position in the merged sentence
  double time = 0.0;
  bool needs_gesture = false;           // deictic or bare "object"
};

struct SlotRequest {
  std::vector<std::string> candidates;
  std::optional<double> anchor;  // time of the voice mention, if any
  bool needs_gesture = false;
};

inline std::vector<std::string> all_ids(const Scene& scene) {
  std::vector<std::string> ids;
  for (const auto& o : scene.objects()) ids.push_back(o.id);
  return ids;
}

inline std::vector<Mention> voice_mentions(const MergedSentence& s, const Scene& scene) {
  std::vector<Mention> out;
  std::vector<std::string> attributes;
  const auto words = s.words();
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i].source != Modality::voice) continue;
    const std::string& tok = words[i].word.best().token;
    const double t = words[i].word.timestamp();
    if (is_attribute_word(tok)) {
      attributes.push_back(tok);
      continue;
    }
    if (tok == "the" || tok == "a" || tok == "an") continue;

    Mention m;
    m.index = i;
    m.time = t;
    if (scene.contains(tok)) {
      m.candidates = {tok};
    } else if (scene.has_type(tok) || tok == "object" || tok == "one" || tok == "thing") {
      auto query = attributes;
      query.push_back(tok);
      for (const auto& o : ground_class(scene, query)) m.candidates.push_back(o.id);
      if (tok != "object" && tok != "one" && tok != "thing") {
        // A class with no matching instance says nothing reliable.
        if (m.candidates.empty()) m.candidates = all_ids(scene), m.needs_gesture = true;
      } else if (attributes.empty()) {
        m.needs_gesture = true;
      }
    } else if (is_deictic_word(tok)) {
      m.candidates = all_ids(scene);
      m.needs_gesture = true;
    } else {
      attributes.clear();
      continue;
    }
    attributes.clear();
    out.push_back(std::move(m));
  }
  return out;
}

// Repeated mentions of one referent ("cup1 cup") narrow each other.
inline SlotRequest combine(const std::vector<const Mention*>& region, const Scene& scene) {
  SlotRequest req;
  if (region.empty()) {
    req.candidates = all_ids(scene);
    req.needs_gesture = true;
    return req;
  }
  req.candidates = region.front()->candidates;
  req.anchor = region.front()->time;
  req.needs_gesture = region.front()->needs_gesture;
  for (std::size_t k = 1; k < region.size(); ++k) {
    const auto& next = region[k]->candidates;
    if (region[k]->needs_gesture) continue;
    std::vector<std::string> both;
    for (const auto& c : req.candidates) {
      if (std::find(next.begin(), next.end(), c) != next.end()) both.push_back(c);
    }
    if (!both.empty()) {
      req.candidates = std::move(both);
      req.needs_gesture = false;
    }
  }
  return req;
}

inline double gesture_weight(const TimedWord& g, const SceneObject& o) {
  return std::max(g.weight_of(o.id), g.weight_of(o.type));
}

struct Choice {
  std::size_t gesture;  // index into the gesture list
  std::string object;
  double weight;
};

}  // namespace detail

/// Context-aware reference resolver used as an LLM-free backend.
///
/// Action and action parameter come from weight summed over every candidate
/// of every word. For double-object actions the strongest allowed
/// preposition splits the voice object mentions into a first and a second
/// region. A mention is grounded through the scene: instance ids directly,
/// class names and attribute phrases ("red object") through ground_class,
/// deictic words ("this") to any object. A slot with one remaining
/// candidate is fixed; the others take the assignment of gesture words to
/// objects that maximizes the product of gesture weights, with to1 != to2,
/// gestures within `deictic_window` of their mention, and ties broken toward
/// gesture order matching slot order and then smaller time offsets. Throws
/// when a required slot cannot be filled.
inline DecodeResult heuristic_resolve(const MergedSentence& s, const ActionRegistry& registry,
                                      const Scene& scene, const HeuristicOptions& opt = {}) {
  if (s.empty()) throw Error(ErrorKind::usage, "cannot decode an empty sentence");
  const auto words = s.words();
  DecodeResult r;

  auto actions = detail::collect_evidence(s, [&](const std::string& t) {
    return registry.is_action(t);
  });
  auto action = detail::strongest(actions);
  if (!action) throw Error(ErrorKind::decode, "no action word in the sentence");
  const ActionSpec& spec = *registry.find(action->first);
  r.command.a = spec.name;

  auto props = detail::collect_evidence(s, [&](const std::string& t) {
    return registry.is_property(t);
  });
  if (auto prop = detail::strongest(props); prop && prop->second.weight >= opt.min_property_evidence) {
    r.command.ap = prop->first;
    r.trace.push_back({Slot::ap, prop->first, words[prop->second.best_index].word.timestamp()});
  }
  r.trace.push_back({Slot::a, spec.name, words[action->second.best_index].word.timestamp()});

  const std::size_t needed = spec.arity == Arity::zero ? 0 : spec.arity == Arity::one ? 1 : 2;
  if (needed == 0) return r;

  std::optional<std::size_t> prep_index;
  if (needed == 2) {
    auto preps = detail::collect_evidence(s, [&](const std::string& t) {
      return std::find(spec.prepositions.begin(), spec.prepositions.end(), t) !=
             spec.prepositions.end();
    });
    auto prep = detail::strongest(preps);
    if (!prep) {
      throw Error(ErrorKind::decode, "'" + spec.name + "' needs a preposition but none was heard");
    }
    r.command.p = prep->first;
    prep_index = prep->second.best_index;
  }

  // Group voice mentions into slot regions.
  const auto mentions = detail::voice_mentions(s, scene);
  std::vector<std::vector<const detail::Mention*>> regions(needed);
  for (const auto& m : mentions) {
    const std::size_t slot = (needed == 2 && m.index > *prep_index) ? 1 : 0;
    regions[slot].push_back(&m);
  }
  std::vector<detail::SlotRequest> requests;
  for (const auto& region : regions) requests.push_back(detail::combine(region, scene));

  // Objects fixed by voice alone are excluded from the other slot.
  std::vector<std::optional<std::string>> chosen(needed);
  std::vector<std::optional<double>> chosen_time(needed);
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t j = 0; j < needed; ++j) {
      if (chosen[j] || requests[j].needs_gesture || requests[j].candidates.size() != 1) continue;
      chosen[j] = requests[j].candidates.front();
      chosen_time[j] = requests[j].anchor;
      changed = true;
      for (std::size_t k = 0; k < needed; ++k) {
        if (k == j) continue;
        std::erase(requests[k].candidates, *chosen[j]);
        if (!chosen[k] && requests[k].candidates.empty()) {
          throw Error(ErrorKind::decode, "both object slots resolve to '" + *chosen[j] + "'");
        }
      }
    }
  }

  std::vector<std::size_t> open;
  for (std::size_t j = 0; j < needed; ++j) if (!chosen[j]) open.push_back(j);
  if (!open.empty()) {
    std::vector<const TimedWord*> gestures;
    for (const auto& mw : words) {
      if (mw.source == Modality::gesture) gestures.push_back(&mw.word);
    }
    // Per open slot, every usable (gesture, object) pair.
    std::vector<std::vector<detail::Choice>> options(open.size());
    for (std::size_t u = 0; u < open.size(); ++u) {
      const auto& req = requests[open[u]];
      for (std::size_t g = 0; g < gestures.size(); ++g) {
        if (req.anchor &&
            std::abs(gestures[g]->timestamp() - *req.anchor) > opt.deictic_window) continue;
        for (const auto& id : req.candidates) {
          const double w = detail::gesture_weight(*gestures[g], *scene.find(id));
          if (w > 0.0) options[u].push_back({g, id, w});
        }
      }
      if (options[u].empty()) {
        throw Error(ErrorKind::decode, std::string("cannot ground ") +
                                           to_string(open[u] == 0 ? Slot::to1 : Slot::to2) +
                                           ": no gesture evidence for an ambiguous reference");
      }
    }

    struct Score {
      double product = -1.0;
      bool ordered = false;
      double offset = std::numeric_limits<double>::infinity();
    };
    auto better = [](const Score& x, const Score& y) {
      if (x.product != y.product) return x.product > y.product;
      if (x.ordered != y.ordered) return x.ordered;
      return x.offset < y.offset;
    };
    auto offset_of = [&](std::size_t u, const detail::Choice& c) {
      const auto& req = requests[open[u]];
      return req.anchor ? std::abs(gestures[c.gesture]->timestamp() - *req.anchor) : 0.0;
    };

    Score best_score;
    std::vector<const detail::Choice*> best_pick;
    for (bool allow_reuse : {false, true}) {
      std::vector<const detail::Choice*> pick(open.size());
      auto search = [&](auto&& self, std::size_t u) -> void {
        if (u == open.size()) {
          Score sc{1.0, true, 0.0};
          for (std::size_t k = 0; k < pick.size(); ++k) {
            sc.product *= pick[k]->weight;
            sc.offset += offset_of(k, *pick[k]);
            if (k > 0 && pick[k]->gesture < pick[k - 1]->gesture) sc.ordered = false;
          }
          if (better(sc, best_score)) {
            best_score = sc;
            best_pick = pick;
          }
          return;
        }
        for (const auto& c : options[u]) {
          bool clash = false;
          for (std::size_t j = 0; j < needed; ++j) {
            if (chosen[j] && *chosen[j] == c.object) clash = true;
          }
          for (std::size_t k = 0; k < u; ++k) {
            if (pick[k]->object == c.object) clash = true;
            if (!allow_reuse && pick[k]->gesture == c.gesture) clash = true;
          }
          if (clash) continue;
          pick[u] = &c;
          self(self, u + 1);
        }
      };
      search(search, 0);
      if (!best_pick.empty()) break;
    }
    if (best_pick.empty()) {
      throw Error(ErrorKind::decode, "gesture evidence cannot ground distinct objects");
    }
    for (std::size_t u = 0; u < open.size(); ++u) {
      chosen[open[u]] = best_pick[u]->object;
      chosen_time[open[u]] = gestures[best_pick[u]->gesture]->timestamp();
    }
  }

  r.command.to1 = chosen[0];
  r.trace.push_back({Slot::to1, *chosen[0], chosen_time[0].value_or(0.0)});
  if (needed == 2) {
    r.trace.push_back({Slot::p, *r.command.p, words[*prep_index].word.timestamp()});
    r.command.to2 = chosen[1];
    r.trace.push_back({Slot::to2, *chosen[1], chosen_time[1].value_or(0.0)});
  }
  return r;
}

}  // namespace fusemerge

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

#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace fusemerge {
namespace {

using testing::example_gesture;
using testing::example_registry;
using testing::example_scene;
using testing::example_voice;

TimedWord w(double t, std::vector<Candidate> c) { return TimedWord(t, std::move(c)); }

ModalitySentence voice(std::vector<TimedWord> words) { return ModalitySentence(Modality::voice, std::move(words)); }
ModalitySentence gesture(std::vector<TimedWord> words) { return ModalitySentence(Modality::gesture, std::move(words)); }

Scene red_scene() {
  return Scene({{"cube1", "cube", {Size::small, Color::red, {}}},
                {"cup1", "cup", {Size::medium, Color::red, {}}},
                {"plate1", "plate", {Size::small, Color::blue, {}}}});
}

void expect_unique_slots(const DecodeResult& r) {
  std::set<Slot> seen;
  for (const auto& a : r.trace) EXPECT_TRUE(seen.insert(a.slot).second);
}

TEST(Argmax, ExampleDuplicateObjectFailure) {
  const auto r = argmax_decode(merge_sentences(example_gesture(), example_voice()), example_registry(), example_scene());
  EXPECT_EQ(r.command, (SkillCommand{std::nullopt, "place", "cup1", "to", "cup1"}));
  expect_unique_slots(r);
  ASSERT_EQ(r.trace.size(), 4u);
  EXPECT_EQ(r.trace[3].slot, Slot::to2);
  EXPECT_DOUBLE_EQ(r.trace[3].timestamp, 0.8);
}

TEST(Argmax, SimpleSingleObject) {
  const Scene s({{"cup1", "cup", {}}, {"box1", "box", {}}});
  const auto r = argmax_decode(as_merged(voice({w(0, {{"pick", 1}}), w(0.2, {{"cup", 1}})})),
                               ActionRegistry::standard(), s);
  EXPECT_EQ(r.command, (SkillCommand{std::nullopt, "pick", "cup1", std::nullopt, std::nullopt}));
}

TEST(Argmax, ClassGroundsToLowestIndex) {
  const Scene s({{"cup3", "cup", {}}, {"cup2", "cup", {}}});
  const auto r = argmax_decode(as_merged(voice({w(0, {{"pick", 1}}), w(0.2, {{"cup", 1}})})),
                               ActionRegistry::standard(), s);
  EXPECT_EQ(r.command.to1, "cup2");
}

TEST(Argmax, Errors) {
  const Scene s(std::vector<SceneObject>{{"cup1", "cup", {}}});
  try {
    argmax_decode(as_merged(voice({w(0, {{"cup", 1}})})), ActionRegistry::standard(), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::decode);
  }
  EXPECT_THROW(argmax_decode(MergedSentence{}, ActionRegistry::standard(), s), Error);
}

// Candidate lists given in any order decode the same way.
TEST(ArgmaxProperty, CandidateOrderInsensitive) {
  Rng rng(31);
  const auto data = generate_dataset({0.5, 0.3, 0.2, 0.3}, GeneratorConfig{}, 200, 4);
  for (const auto& s : data) {
    std::vector<TimedWord> shuffled;
    for (const auto& word : s.voice.words()) {
      std::vector<Candidate> c(word.candidates().begin(), word.candidates().end());
      for (std::size_t i = c.size(); i > 1; --i) std::swap(c[i - 1], c[rng.index(i)]);
      shuffled.emplace_back(word.timestamp(), std::move(c));
    }
    const auto reg = registry_for(s.scenario);
    std::optional<SkillCommand> a, b;
    try { a = argmax_decode(merge_sentences(s.gesture, s.voice), reg, s.scene).command; } catch (const Error&) {}
    try { b = argmax_decode(merge_sentences(s.gesture, voice(shuffled)), reg, s.scene).command; } catch (const Error&) {}
    EXPECT_EQ(a, b);
  }
}

TEST(ArgmaxProperty, ZeroNoiseUniqueScenesDecodeExactly) {
  GeneratorConfig cfg;
  cfg.scene.unique_types = true;
  for (const auto& s : generate_dataset({}, cfg, 200, 12)) {
    const auto r = argmax_decode(merge_sentences(s.gesture, s.voice), cfg.registry, s.scene);
    EXPECT_EQ(r.command, s.ground_truth) << "sample " << s.sample_id;
    expect_unique_slots(r);
  }
}

TEST(Heuristic, AttributePhraseWithGesture) {
  const auto v = voice({w(0.0, {{"pick", 1}}), w(0.2, {{"red", 1}}), w(0.4, {{"object", 1}})});
  const auto g = gesture({w(0.4, {{"cube1", 0.85}, {"cup1", 0.3}})});
  const auto r = heuristic_resolve(merge_sentences(g, v), ActionRegistry::standard(), red_scene());
  EXPECT_EQ(r.command, (SkillCommand{std::nullopt, "pick", "cube1", std::nullopt, std::nullopt}));
}

TEST(Heuristic, AttributePhraseWithoutGestureIsAmbiguous) {
  const auto v = voice({w(0.0, {{"pick", 1}}), w(0.2, {{"red", 1}}), w(0.4, {{"object", 1}})});
  EXPECT_THROW(heuristic_resolve(as_merged(v), ActionRegistry::standard(), red_scene()), Error);
  // A unique attribute match needs no gesture.
  const auto blue = voice({w(0.0, {{"pick", 1}}), w(0.2, {{"blue", 1}}), w(0.4, {{"object", 1}})});
  EXPECT_EQ(heuristic_resolve(as_merged(blue), ActionRegistry::standard(), red_scene()).command.to1, "plate1");
}

TEST(Heuristic, ExampleDuplicateSkip) {
  const auto r = heuristic_resolve(merge_sentences(example_gesture(), example_voice()), example_registry(), example_scene());
  EXPECT_EQ(r.command, (SkillCommand{std::nullopt, "place", "cup1", "to", "cube1"}));
  expect_unique_slots(r);
}

TEST(Heuristic, DeicticsNeedGestures) {
  const Scene s({{"cube1", "cube", {}}, {"box1", "box", {}}});
  const auto reg = registry_for(Scenario::t4);
  const auto v = voice({w(0.0, {{"put", 1}}), w(0.2, {{"this", 1}}), w(0.4, {{"to", 1}}), w(0.6, {{"that", 1}})});
  try {
    heuristic_resolve(as_merged(v), reg, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::decode);
  }
  const auto g = gesture({w(0.25, {{"cube1", 0.8}, {"box1", 0.2}}), w(0.65, {{"box1", 0.7}, {"cube1", 0.4}})});
  EXPECT_EQ(heuristic_resolve(merge_sentences(g, v), reg, s).command,
            (SkillCommand{std::nullopt, "put", "cube1", "to", "box1"}));
}

TEST(Heuristic, GestureOutsideWindowIsIgnored) {
  const Scene s({{"cube1", "cube", {}}, {"box1", "box", {}}});
  const auto v = voice({w(0.0, {{"pick", 1}}), w(0.2, {{"this", 1}})});
  const auto far = gesture({w(5.0, {{"cube1", 0.9}})});
  EXPECT_THROW(heuristic_resolve(merge_sentences(far, v), ActionRegistry::standard(), s), Error);
  HeuristicOptions wide;
  wide.deictic_window = 10.0;
  EXPECT_EQ(heuristic_resolve(merge_sentences(far, v), ActionRegistry::standard(), s, wide).command.to1, "cube1");
}

TEST(Heuristic, ArityProjection) {
  const Scene s({{"cube1", "cube", {}}, {"box1", "box", {}}});
  // "stop" forbids objects even though one is mentioned.
  const auto v = voice({w(0.0, {{"stop", 1}}), w(0.2, {{"cube", 1}})});
  EXPECT_EQ(heuristic_resolve(as_merged(v), ActionRegistry::standard(), s).command,
            (SkillCommand{std::nullopt, "stop", std::nullopt, std::nullopt, std::nullopt}));
}

TEST(HeuristicProperty, NeverDuplicatesObjects) {
  for (double level : {0.0, 0.3, 0.6}) {
    for (const auto& s : generate_dataset({level, level, level, level}, GeneratorConfig{}, 150, 77)) {
      try {
        const auto r = heuristic_resolve(merge_sentences(s.gesture, s.voice), registry_for(s.scenario), s.scene);
        if (r.command.to1 && r.command.to2) {
          EXPECT_NE(*r.command.to1, *r.command.to2);
        }
        expect_unique_slots(r);
      } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::decode);
      }
    }
  }
}

double accuracy(const std::vector<DatasetSample>& data, bool heuristic) {
  int hits = 0;
  for (const auto& s : data) {
    try {
      const auto merged = merge_sentences(s.gesture, s.voice);
      const auto reg = registry_for(s.scenario);
      const auto cmd = heuristic ? heuristic_resolve(merged, reg, s.scene).command
                                 : argmax_decode(merged, reg, s.scene).command;
      hits += cmd == s.ground_truth && validate(cmd, s.scene, reg).empty();
    } catch (const Error&) {
    }
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TEST(HeuristicProperty, AtLeastArgmaxAccuracy) {
  for (double level : {0.0, 0.2, 0.4, 0.6}) {
    const auto data = generate_dataset({level, level, 0.0, level}, GeneratorConfig{}, 200, 3);
    EXPECT_GE(accuracy(data, true), accuracy(data, false)) << "level " << level;
  }
  for (auto sc : {Scenario::t1, Scenario::t2, Scenario::t3, Scenario::t4}) {
    const auto data = generate_dataset({0.3, 0.3, 0.3, 0.3}, GeneratorConfig::for_scenario(sc), 100, 3);
    EXPECT_GE(accuracy(data, true), accuracy(data, false)) << to_string(sc);
  }
}

TEST(DecodeResult, TraceJson) {
  const auto r = argmax_decode(merge_sentences(example_gesture(), example_voice()), example_registry(), example_scene());
  const auto j = to_json(r);
  EXPECT_EQ(j["command"]["to2"], "cup1");
  EXPECT_EQ(j["trace"].size(), 4u);
  EXPECT_EQ(j["trace"][0]["slot"], "a");
}

}  // namespace
}  // namespace fusemerge

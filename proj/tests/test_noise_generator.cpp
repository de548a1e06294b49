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

#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace fusemerge {
namespace {

double jaccard_oracle(const std::string& a, const std::string& b) {
  std::set<char> sa(a.begin(), a.end()), sb(b.begin(), b.end()), inter, uni;
  for (char c : sa) (sb.count(c) ? inter : uni).insert(c);
  uni.insert(sa.begin(), sa.end());
  uni.insert(sb.begin(), sb.end());
  return 100.0 * static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

std::vector<TimedWord> words_at(std::initializer_list<const char*> toks, double spacing = 0.2) {
  std::vector<TimedWord> out;
  double t = 0.0;
  for (auto tok : toks) {
    out.emplace_back(t, std::vector<Candidate>{{tok, 1.0}});
    t += spacing;
  }
  return out;
}

TEST(Similarity, Examples) {
  EXPECT_NEAR(similarity("place", "plate"), 66.67, 0.01);
  EXPECT_DOUBLE_EQ(similarity("cup", "cup"), 100.0);
  EXPECT_DOUBLE_EQ(similarity("ab", "cd"), 0.0);
  EXPECT_THROW(similarity("", "a"), Error);
}

TEST(SimilarityProperty, MatchesSetOracle) {
  Rng rng(101);
  for (int i = 0; i < 1000; ++i) {
    const auto a = testing::random_word(rng, 1, 9, 12);
    const auto b = testing::random_word(rng, 1, 9, 12);
    EXPECT_EQ(similarity(a, b), jaccard_oracle(a, b)) << a << " " << b;
    EXPECT_EQ(similarity(a, b), similarity(b, a));
  }
}

TEST(PhoneticNoise, DisabledGivesSingleton) {
  Rng rng(1);
  const std::vector<std::string> vocab{"place", "plate", "lace"};
  for (int i = 0; i < 100; ++i) {
    const auto c = apply_phonetic_noise("place", vocab, NoiseParams{}, rng);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].token, "place");
    EXPECT_EQ(c[0].weight, 1.0);
  }
}

TEST(PhoneticNoise, WeightRule) {
  Rng rng(2);
  const std::vector<std::string> vocab{"place", "plate", "lace", "cup"};
  NoiseParams p;
  p.phonetic = 1.0;
  for (int i = 0; i < 500; ++i) {
    const TimedWord w(0.0, apply_phonetic_noise("place", vocab, p, rng));
    EXPECT_EQ(w.best().token, "place");
    const double tw = w.weight_of("place");
    EXPECT_GE(tw, 0.5);
    EXPECT_LT(tw, 0.9);
    const double plate = w.weight_of("plate"), lace = w.weight_of("lace");
    EXPECT_GT(plate, 0.0);
    EXPECT_LE(plate, tw);
    EXPECT_EQ(w.weight_of("cup"), 0.0);
    // Remaining mass split in proportion to similarity (66.67 vs 80).
    EXPECT_NEAR(plate / lace, jaccard_oracle("place", "plate") / jaccard_oracle("place", "lace"), 1e-12);
    EXPECT_NEAR(tw + plate + lace, 1.0, 1e-12);
  }
}

TEST(PhoneticNoise, SubstitutionRate) {
  Rng rng(3);
  const std::vector<std::string> vocab{"place", "plate"};
  NoiseParams p;
  p.phonetic = 0.4;
  const int n = 10000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += apply_phonetic_noise("place", vocab, p, rng).size() > 1;
  EXPECT_LT(std::abs(hits - 0.4 * n), 3 * std::sqrt(n * 0.4 * 0.6));
}

TEST(Fillers, DisabledAndFull) {
  Rng rng(4);
  const auto words = words_at({"pick", "red", "cube"});
  EXPECT_EQ(insert_fillers(words, default_fillers(), NoiseParams{}, rng), words);
  NoiseParams p;
  p.filler = 1.0;
  const auto out = insert_fillers(words, default_fillers(), p, rng);
  ASSERT_EQ(out.size(), 5u);
  const auto fillers = default_fillers();
  for (std::size_t i : {1u, 3u}) {
    EXPECT_NE(std::find(fillers.begin(), fillers.end(), out[i].best().token), fillers.end());
    EXPECT_EQ(out[i].best().weight, 1.0);
    EXPECT_DOUBLE_EQ(out[i].timestamp(), 0.5 * (out[i - 1].timestamp() + out[i + 1].timestamp()));
  }
}

TEST(Fillers, InsertionRate) {
  Rng rng(5);
  NoiseParams p;
  p.filler = 0.25;
  std::vector<TimedWord> words;
  for (int i = 0; i < 10001; ++i) words.emplace_back(0.1 * i, std::vector<Candidate>{{"w", 1.0}});
  const auto out = insert_fillers(words, default_fillers(), p, rng);
  const double n = 10000, inserted = static_cast<double>(out.size() - words.size());
  EXPECT_LT(std::abs(inserted - 0.25 * n), 3 * std::sqrt(n * 0.25 * 0.75));
}

TEST(Truncation, Rules) {
  Rng rng(6);
  const auto two = words_at({"pick", "cube"});
  EXPECT_EQ(truncate(two, NoiseParams{}, rng), two);
  NoiseParams p;
  p.truncation = 1.0;
  const auto one = truncate(two, p, rng);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], two[0]);
  const auto single = words_at({"stop"});
  EXPECT_EQ(truncate(single, p, rng), single);
}

TEST(TruncationProperty, NonEmptyStrictPrefix) {
  Rng rng(7);
  NoiseParams p;
  p.truncation = 1.0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<TimedWord> words;
    const auto n = rng.integer(2, 9);
    for (std::int64_t k = 0; k < n; ++k) words.push_back(testing::random_timed_word(rng, 0.1 * static_cast<double>(k)));
    const auto out = truncate(words, p, rng);
    ASSERT_GE(out.size(), 1u);
    ASSERT_LT(out.size(), words.size());
    for (std::size_t k = 0; k < out.size(); ++k) EXPECT_EQ(out[k], words[k]);
  }
}

Scene one_cup_scene() {
  return Scene({{"cup1", "cup", {}}, {"box1", "box", {}}, {"cube1", "cube", {}}});
}

TEST(Gesture, ZeroAlignAndWeights) {
  Rng rng(8);
  const SkillCommand truth{std::nullopt, "pick", "cup1", std::nullopt, std::nullopt};
  const ModalitySentence voice(Modality::voice, words_at({"pick", "cup"}, 0.3));
  const auto g = generate_gesture_sentence(truth, one_cup_scene(), voice, NoiseParams{}, rng);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_DOUBLE_EQ(g.words()[0].timestamp(), 0.3);
  EXPECT_GE(g.words()[0].weight_of("cup1"), 0.6);
  EXPECT_LE(g.words()[0].weight_of("cup1"), 0.95);
  EXPECT_EQ(g.words()[0].weight_of("box1"), 0.01);
  EXPECT_EQ(g.words()[0].weight_of("cube1"), 0.01);
}

TEST(Gesture, SameTypeRangeAndZeroArity) {
  Rng rng(9);
  const Scene s({{"cup1", "cup", {}}, {"cup2", "cup", {}}, {"box1", "box", {}}});
  const SkillCommand truth{std::nullopt, "pick", "cup2", std::nullopt, std::nullopt};
  for (int i = 0; i < 200; ++i) {
    const auto g = generate_gesture_sentence(truth, s, {0.2, std::nullopt}, 0.0, NoiseParams{}, rng);
    const double other = g.words()[0].weight_of("cup1");
    EXPECT_GE(other, 0.2);
    EXPECT_LT(other, 0.8);
  }
  const SkillCommand stop{std::nullopt, "stop", std::nullopt, std::nullopt, std::nullopt};
  EXPECT_TRUE(generate_gesture_sentence(stop, s, {}, 0.0, NoiseParams{}, rng).empty());
}

TEST(Gesture, TruncatedAnchorFallsBackToMidpoint) {
  Rng rng(10);
  const SkillCommand truth{std::nullopt, "pick", "cup1", std::nullopt, std::nullopt};
  const ModalitySentence voice(Modality::voice, words_at({"slowly", "pick"}, 0.4));
  const auto g = generate_gesture_sentence(truth, one_cup_scene(), voice, NoiseParams{}, rng);
  EXPECT_DOUBLE_EQ(g.words()[0].timestamp(), 0.2);
}

// Offsets follow U(0, 2 * align): mean, variance and decile counts.
TEST(Gesture, OffsetDistribution) {
  Rng rng(11);
  NoiseParams p;
  p.align = 0.5;
  const SkillCommand truth{std::nullopt, "pick", "cup1", std::nullopt, std::nullopt};
  const int n = 10000;
  std::vector<int> bins(10, 0);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double eps = generate_gesture_sentence(truth, one_cup_scene(), {1.0, std::nullopt}, 0.0, p, rng)
                           .words()[0]
                           .timestamp() -
                       1.0;
    ASSERT_GE(eps, -1e-12);
    ASSERT_LE(eps, 1.0 + 1e-12);
    sum += eps;
    ++bins[std::min(9, static_cast<int>(eps * 10))];
  }
  const double sd_mean = std::sqrt(1.0 / 12.0 / n);
  EXPECT_LT(std::abs(sum / n - 0.5), 3 * sd_mean);
  for (int b : bins) EXPECT_LT(std::abs(b - n / 10.0), 3 * std::sqrt(n * 0.1 * 0.9));
}

TEST(Generator, ZeroNoiseIsClean) {
  const auto data = generate_dataset({}, GeneratorConfig{}, 100, 21);
  for (const auto& s : data) {
    for (const auto& w : s.voice.words()) {
      ASSERT_EQ(w.candidates().size(), 1u);
      EXPECT_EQ(w.best().weight, 1.0);
    }
    // Each gesture sits exactly on its object word.
    for (const auto& g : s.gesture.words()) {
      bool on_word = false;
      for (const auto& w : s.voice.words()) on_word = on_word || w.timestamp() == g.timestamp();
      EXPECT_TRUE(on_word);
    }
    EXPECT_TRUE(validate(s.ground_truth, s.scene, registry_for(s.scenario)).empty());
    EXPECT_EQ(s.sample_id < 100, true);
  }
}

TEST(Generator, Deterministic) {
  const NoiseParams p{0.3, 0.3, 0.3, 0.3};
  EXPECT_EQ(generate_dataset(p, GeneratorConfig{}, 50, 9), generate_dataset(p, GeneratorConfig{}, 50, 9));
  EXPECT_NE(generate_dataset(p, GeneratorConfig{}, 50, 9), generate_dataset(p, GeneratorConfig{}, 50, 10));
  EXPECT_EQ(generate_sample_at(p, GeneratorConfig{}, 9, 17), generate_dataset(p, GeneratorConfig{}, 50, 9)[17]);
}

// Noise levels only perturb the sentences: scenes and commands stay put.
TEST(Generator, LevelsShareScenesAndCommands) {
  const auto clean = generate_dataset({}, GeneratorConfig{}, 100, 13);
  const auto noisy = generate_dataset({0.6, 0.6, 0.6, 0.6}, GeneratorConfig{}, 100, 13);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(clean[i].scene, noisy[i].scene);
    EXPECT_EQ(clean[i].ground_truth, noisy[i].ground_truth);
  }
}

TEST(Generator, EveryNoiseTypeObserved) {
  const NoiseParams p{0.3, 0.3, 0.3, 0.3};
  const auto data = generate_dataset(p, GeneratorConfig{}, 1000, 14);
  const auto clean = generate_dataset({}, GeneratorConfig{}, 1000, 14);
  const auto fillers = default_fillers();
  int phon = 0, fill = 0, trunc = 0, shifted = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const auto& w : data[i].voice.words()) {
      phon += w.candidates().size() > 1;
      fill += std::find(fillers.begin(), fillers.end(), w.best().token) != fillers.end();
    }
    trunc += data[i].voice.words().back().timestamp() < clean[i].voice.words().back().timestamp();
    for (std::size_t k = 0; k < data[i].gesture.size() && k < clean[i].gesture.size(); ++k) {
      shifted += data[i].gesture.words()[k].timestamp() != clean[i].gesture.words()[k].timestamp();
    }
  }
  EXPECT_GT(phon, 0);
  EXPECT_GT(fill, 0);
  EXPECT_GT(trunc, 0);
  EXPECT_GT(shifted, 0);
}

TEST(Generator, InconsistentConfig) {
  GeneratorConfig cfg;
  cfg.registry = ActionRegistry({{"put", Arity::two, {"into"}}}, {"slowly"});
  cfg.scene.min_objects = cfg.scene.max_objects = 1;
  try {
    generate_dataset({}, cfg, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
  EXPECT_THROW(generate_dataset({1.5, 0, 0, 0}, GeneratorConfig{}, 1, 0), Error);
}

TEST(Scenarios, Shapes) {
  for (const auto& s : generate_dataset({}, GeneratorConfig::for_scenario(Scenario::t1), 50, 1)) {
    EXPECT_EQ(s.ground_truth, (SkillCommand{std::nullopt, "pick", "cube1", std::nullopt, std::nullopt}));
    EXPECT_EQ(s.scene.instances_of("cube").size(), 1u);
    EXPECT_EQ(top1_transcript(s.voice), "pick cube");
  }
  for (const auto& s : generate_dataset({}, GeneratorConfig::for_scenario(Scenario::t2), 50, 1)) {
    const auto red = ground_class(s.scene, "red object");
    ASSERT_EQ(red.size(), 2u);
    EXPECT_NE(red[0].type, red[1].type);
    EXPECT_TRUE(*s.ground_truth.to1 == red[0].id || *s.ground_truth.to1 == red[1].id);
    EXPECT_EQ(top1_transcript(s.voice), "pick the red object");
  }
  for (const auto& s : generate_dataset({}, GeneratorConfig::for_scenario(Scenario::t3), 50, 1)) {
    EXPECT_EQ(s.ground_truth, (SkillCommand{std::nullopt, "put", "cube1", "to", "box1"}));
    EXPECT_TRUE(validate(s.ground_truth, s.scene, registry_for(Scenario::t3)).empty());
  }
  for (const auto& s : generate_dataset({}, GeneratorConfig::for_scenario(Scenario::t4), 50, 1)) {
    EXPECT_EQ(top1_transcript(s.voice), "put this to that");
    EXPECT_EQ(s.gesture.size(), 2u);
    EXPECT_TRUE(validate(s.ground_truth, s.scene, registry_for(Scenario::t4)).empty());
  }
}

TEST(DatasetJsonl, RoundTrip) {
  for (auto sc : {Scenario::none, Scenario::t2, Scenario::t4}) {
    const auto data = generate_dataset({0.4, 0.4, 0.4, 0.4}, GeneratorConfig::for_scenario(sc), 40, 2);
    std::stringstream ss;
    write_dataset_jsonl(ss, data);
    EXPECT_EQ(read_dataset_jsonl(ss), data);
  }
}

}  // namespace
}  // namespace fusemerge

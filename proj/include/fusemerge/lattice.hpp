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
#include <cstddef>
#include <istream>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fusemerge/error.hpp"

namespace fusemerge {

enum class Modality { voice, gesture };

inline const char* to_string(Modality m) {
  return m == Modality::voice ? "voice" : "gesture";
}

inline Modality modality_from_string(std::string_view s) {
  if (s == "voice") return Modality::voice;
  if (s == "gesture") return Modality::gesture;
  throw Error(ErrorKind::parse, "unknown modality '" + std::string(s) + "'");
}

/// One interpretation of a word and its score. Scores are not probabilities:
/// a word's candidate weights may sum to more than one.
struct Candidate {
  std::string token;
  double weight = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

namespace detail {

inline bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  });
}

// Descending weight, then ascending token.
inline bool candidate_before(const Candidate& x, const Candidate& y) {
  if (x.weight != y.weight) return x.weight > y.weight;
  return x.token < y.token;
}

}  // namespace detail

/// A lattice slot: a timestamp plus the competing interpretations of the
/// word observed there. Candidates are kept sorted by descending weight with
/// ties broken by token, so two TimedWords built from the same candidate set
/// in any order compare equal.
class TimedWord {
 public:
  TimedWord(double timestamp, std::vector<Candidate> candidates)
      : timestamp_(timestamp), candidates_(std::move(candidates)) {
    if (!std::isfinite(timestamp_) || timestamp_ < 0.0) {
      throw Error(ErrorKind::invalid, "timestamp must be a finite value >= 0");
    }
    if (candidates_.empty()) {
      throw Error(ErrorKind::invalid, "a timed word needs at least one candidate");
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& c : candidates_) {
      if (c.token.empty() || detail::has_whitespace(c.token)) {
        throw Error(ErrorKind::invalid, "candidate token '" + c.token +
                                            "' is empty or contains whitespace");
      }
      if (!(c.weight > 0.0 && c.weight <= 1.0)) {
        throw Error(ErrorKind::invalid,
                    "candidate '" + c.token + "' has weight outside (0, 1]");
      }
      if (!seen.insert(c.token).second) {
        throw Error(ErrorKind::invalid, "duplicate candidate token '" + c.token + "'");
      }
    }
    std::sort(candidates_.begin(), candidates_.end(), detail::candidate_before);
  }

  double timestamp() const noexcept { return timestamp_; }
  std::span<const Candidate> candidates() const noexcept { return candidates_; }
  const Candidate& best() const noexcept { return candidates_.front(); }

  /// Weight of `token`, or 0 when it is not a candidate.
  double weight_of(std::string_view token) const noexcept {
    for (const auto& c : candidates_) {
      if (c.token == token) return c.weight;
    }
    return 0.0;
  }

  double total_weight() const noexcept {
    double sum = 0.0;
    for (const auto& c : candidates_) sum += c.weight;
    return sum;
  }

  friend bool operator==(const TimedWord&, const TimedWord&) = default;

 private:
  double timestamp_;
  std::vector<Candidate> candidates_;
};

/// Episodes longer than this are accepted but reported.
inline constexpr double kLongSentenceSeconds = 60.0;

/// The word sequence observed on one input channel, in time order.
class ModalitySentence {
 public:
  explicit ModalitySentence(Modality modality, std::vector<TimedWord> words = {})
      : modality_(modality), words_(std::move(words)) {
    for (std::size_t i = 1; i < words_.size(); ++i) {
      if (words_[i].timestamp() < words_[i - 1].timestamp()) {
        throw Error(ErrorKind::invalid, std::string(to_string(modality_)) +
                                            " sentence timestamps must be nondecreasing");
      }
    }
    if (!words_.empty() &&
        words_.back().timestamp() - words_.front().timestamp() > kLongSentenceSeconds) {
      warn(std::string(to_string(modality_)) + " sentence spans more than 60 s");
    }
  }

  Modality modality() const noexcept { return modality_; }
  std::span<const TimedWord> words() const noexcept { return words_; }
  bool empty() const noexcept { return words_.empty(); }
  std::size_t size() const noexcept { return words_.size(); }

  friend bool operator==(const ModalitySentence&, const ModalitySentence&) = default;

 private:
  Modality modality_;
  std::vector<TimedWord> words_;
};

struct MergedWord {
  TimedWord word;
  Modality source;

  friend bool operator==(const MergedWord&, const MergedWord&) = default;
};

/// Gesture and voice words interleaved on one time axis.
class MergedSentence {
 public:
  MergedSentence() = default;

  explicit MergedSentence(std::vector<MergedWord> words) : words_(std::move(words)) {
    for (std::size_t i = 1; i < words_.size(); ++i) {
      if (words_[i].word.timestamp() < words_[i - 1].word.timestamp()) {
        throw Error(ErrorKind::invalid, "merged sentence timestamps must be nondecreasing");
      }
    }
  }

  std::span<const MergedWord> words() const noexcept { return words_; }
  bool empty() const noexcept { return words_.empty(); }
  std::size_t size() const noexcept { return words_.size(); }

  friend bool operator==(const MergedSentence&, const MergedSentence&) = default;

 private:
  std::vector<MergedWord> words_;
};

/// Concatenates gesture then voice words and stable-sorts by timestamp, so
/// on equal timestamps gesture words precede voice words and each input
/// keeps its own order. Words are copied unchanged; nothing is deduplicated.
inline MergedSentence merge_sentences(const ModalitySentence& gesture,
                                      const ModalitySentence& voice) {
  std::vector<MergedWord> words;
  words.reserve(gesture.size() + voice.size());
  for (const auto& w : gesture.words()) words.push_back({w, Modality::gesture});
  for (const auto& w : voice.words()) words.push_back({w, Modality::voice});
  std::stable_sort(words.begin(), words.end(), [](const MergedWord& x, const MergedWord& y) {
    return x.word.timestamp() < y.word.timestamp();
  });
  return MergedSentence(std::move(words));
}

/// Views a single-channel sentence as a merged one.
inline MergedSentence as_merged(const ModalitySentence& s) {
  std::vector<MergedWord> words;
  words.reserve(s.size());
  for (const auto& w : s.words()) words.push_back({w, s.modality()});
  return MergedSentence(std::move(words));
}

inline std::string top1_transcript(const MergedSentence& s) {
  std::string out;
  for (const auto& mw : s.words()) {
    if (!out.empty()) out += ' ';
    out += mw.word.best().token;
  }
  return out;
}

inline std::string top1_transcript(const ModalitySentence& s) {
  return top1_transcript(as_merged(s));
}

// ---------------------------------------------------------------------------
// Transcription lattice post-processing

/// One recognizer output position: a timestamp and raw (pre-softmax) scores
/// for each alternative token.
struct RawPosition {
  double timestamp = 0.0;
  std::vector<std::pair<std::string, double>> alternatives;
};

using RawTokenAlternatives = std::vector<RawPosition>;

struct PostprocessOptions {
  double threshold = 0.08;  // keep alternatives with probability > threshold
  std::size_t top_k = 5;
};

namespace detail {

inline std::vector<Candidate> softmax_top_k(const RawPosition& pos,
                                            const PostprocessOptions& opt) {
  double max_score = -INFINITY;
  for (const auto& [tok, score] : pos.alternatives) max_score = std::max(max_score, score);
  std::vector<Candidate> out;
  double z = 0.0;
  for (const auto& [tok, score] : pos.alternatives) z += std::exp(score - max_score);
  for (const auto& [tok, score] : pos.alternatives) {
    const double p = std::exp(score - max_score) / z;
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const Candidate& c) { return c.token == tok; });
    if (it == out.end()) {
      out.push_back({tok, p});
    } else {
      it->weight += p;  // same surface text from distinct token ids
    }
  }
  std::sort(out.begin(), out.end(), candidate_before);
  if (out.size() > opt.top_k) out.resize(opt.top_k);
  std::erase_if(out, [&](const Candidate& c) { return !(c.weight > opt.threshold); });
  return out;
}

}  // namespace detail

/// Turns raw recognizer scores into a voice sentence: softmax per position,
/// top-k, probability threshold, subword-fragment merging, then a vocabulary
/// check. A fragment pair (a at position i, b at position i+1) becomes the
/// word a+b on position i when a+b is in the vocabulary and neither a nor b
/// is; its weight is p(a) * p(b) and it too must clear the threshold.
/// Positions left without candidates vanish.
/// Throws when nothing survives.
inline ModalitySentence postprocess_lattice(const RawTokenAlternatives& raw,
                                            const std::set<std::string, std::less<>>& vocab,
                                            const PostprocessOptions& opt = {}) {
  if (!(opt.threshold >= 0.0 && opt.threshold < 1.0)) {
    throw Error(ErrorKind::usage, "threshold must lie in [0, 1)");
  }
  if (opt.top_k < 1) throw Error(ErrorKind::usage, "top_k must be at least 1");
  if (vocab.empty()) throw Error(ErrorKind::usage, "vocabulary must not be empty");

  std::vector<std::vector<Candidate>> kept;
  kept.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].alternatives.empty()) {
      throw Error(ErrorKind::invalid,
                  "raw position " + std::to_string(i) + " has no alternatives");
    }
    if (i > 0 && raw[i].timestamp < raw[i - 1].timestamp) {
      throw Error(ErrorKind::invalid, "raw positions must be in time order");
    }
    kept.push_back(detail::softmax_top_k(raw[i], opt));
  }

  auto in_vocab = [&](std::string_view w) { return vocab.find(w) != vocab.end(); };

  // Fragment merging looks at the filtered candidates before the vocabulary
  // check removes the fragments themselves.
  std::vector<std::vector<Candidate>> merged_into(kept.size());
  for (std::size_t i = 0; i + 1 < kept.size(); ++i) {
    for (const auto& a : kept[i]) {
      if (in_vocab(a.token)) continue;
      for (const auto& b : kept[i + 1]) {
        if (in_vocab(b.token)) continue;
        std::string word = a.token + b.token;
        if (!in_vocab(word) || !(a.weight * b.weight > opt.threshold)) continue;
        merged_into[i].push_back({std::move(word), a.weight * b.weight});
      }
    }
  }

  std::vector<TimedWord> words;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    std::vector<Candidate> cands;
    for (const auto& c : kept[i]) {
      if (in_vocab(c.token)) cands.push_back(c);
    }
    for (auto& m : merged_into[i]) {
      auto it = std::find_if(cands.begin(), cands.end(),
                             [&](const Candidate& c) { return c.token == m.token; });
      if (it == cands.end()) {
        cands.push_back(std::move(m));
      } else {
        it->weight = std::max(it->weight, m.weight);
      }
    }
    if (!cands.empty()) words.emplace_back(raw[i].timestamp, std::move(cands));
  }
  if (words.empty()) {
    throw Error(ErrorKind::decode, "every lattice position was filtered out");
  }
  return ModalitySentence(Modality::voice, std::move(words));
}

// ---------------------------------------------------------------------------
// JSON / JSONL lattice files
//
//   {"modality": "voice", "words": [{"t": 0.3, "c": {"place": 0.8, "plate": 0.3}}]}
//
// Merged sentences use the same word records plus a "src" field and no
// top-level modality.

inline nlohmann::ordered_json word_to_json(const TimedWord& w) {
  nlohmann::ordered_json c = nlohmann::ordered_json::object();
  for (const auto& cand : w.candidates()) c[cand.token] = cand.weight;
  nlohmann::ordered_json j;
  j["t"] = w.timestamp();
  j["c"] = std::move(c);
  return j;
}

inline TimedWord word_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("t") || !j.contains("c") || !j["c"].is_object()) {
    throw Error(ErrorKind::parse, "word record needs numeric 't' and object 'c'");
  }
  std::vector<Candidate> cands;
  for (const auto& [token, weight] : j["c"].items()) {
    if (!weight.is_number()) {
      throw Error(ErrorKind::parse, "weight of '" + token + "' is not a number");
    }
    cands.push_back({token, weight.get<double>()});
  }
  if (!j["t"].is_number()) throw Error(ErrorKind::parse, "'t' is not a number");
  return TimedWord(j["t"].get<double>(), std::move(cands));
}

inline nlohmann::ordered_json to_json(const ModalitySentence& s) {
  nlohmann::ordered_json j;
  j["modality"] = to_string(s.modality());
  j["words"] = nlohmann::ordered_json::array();
  for (const auto& w : s.words()) j["words"].push_back(word_to_json(w));
  return j;
}

inline ModalitySentence sentence_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("modality") || !j.contains("words") ||
      !j["modality"].is_string() || !j["words"].is_array()) {
    throw Error(ErrorKind::parse, "sentence record needs 'modality' and 'words'");
  }
  std::vector<TimedWord> words;
  for (const auto& w : j["words"]) words.push_back(word_from_json(w));
  return ModalitySentence(modality_from_string(j["modality"].get<std::string>()),
                          std::move(words));
}

inline nlohmann::ordered_json to_json(const MergedSentence& s) {
  nlohmann::ordered_json j;
  j["words"] = nlohmann::ordered_json::array();
  for (const auto& mw : s.words()) {
    auto w = word_to_json(mw.word);
    w["src"] = to_string(mw.source);
    j["words"].push_back(std::move(w));
  }
  return j;
}

/// Accepts a merged record or a single-modality sentence record.
inline MergedSentence merged_from_json(const nlohmann::json& j) {
  if (j.is_object() && j.contains("modality")) return as_merged(sentence_from_json(j));
  if (!j.is_object() || !j.contains("words") || !j["words"].is_array()) {
    throw Error(ErrorKind::parse, "merged record needs 'words'");
  }
  std::vector<MergedWord> words;
  for (const auto& w : j["words"]) {
    const Modality src = w.contains("src") ? modality_from_string(w["src"].get<std::string>())
                                           : Modality::voice;
    words.push_back({word_from_json(w), src});
  }
  return MergedSentence(std::move(words));
}

/// Parses a JSONL stream of sentence records, skipping blank lines.
inline std::vector<ModalitySentence> read_sentences_jsonl(std::istream& in) {
  std::vector<ModalitySentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sentence_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_sentences_jsonl(std::ostream& out, std::span<const ModalitySentence> sentences) {
  for (const auto& s : sentences) out << to_json(s).dump() << '\n';
}

}  // namespace fusemerge

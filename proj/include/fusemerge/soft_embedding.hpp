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
#include <cctype>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fusemerge/error.hpp"
#include "fusemerge/lattice.hpp"
#include "fusemerge/random.hpp"

namespace fusemerge {

using TokenId = std::int64_t;
using Embedding = std::vector<double>;

/// Subword tokenizer plus embedding table. Implementations must allow
/// concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::vector<TokenId> tokenize(std::string_view text) const = 0;
  virtual Embedding embed(TokenId id) const = 0;
  virtual std::size_t dimension() const = 0;
};

namespace detail {

inline std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t b = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > b) out.push_back(text.substr(b, i - b));
  }
  return out;
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Deterministic stand-in for a model's tokenizer and embedding table.
/// Words are cut into pieces of at most four bytes; a piece's id is its
/// FNV-1a hash and its vector comes from SplitMix64 of (seed, id, k),
/// uniform in [-1, 1).
class HashEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(std::uint64_t seed = 0, std::size_t dim = 16)
      : seed_(seed), dim_(dim) {
    if (dim_ == 0) throw Error(ErrorKind::config, "embedding dimension must be positive");
  }

  std::vector<TokenId> tokenize(std::string_view text) const override {
    std::vector<TokenId> ids;
    for (auto word : detail::split_words(text)) {
      for (std::size_t i = 0; i < word.size(); i += kPiece) {
        ids.push_back(static_cast<TokenId>(detail::fnv1a(word.substr(i, kPiece)) >> 1));
      }
    }
    return ids;
  }

  Embedding embed(TokenId id) const override {
    Embedding v(dim_);
    for (std::size_t k = 0; k < dim_; ++k) {
      const std::uint64_t bits = mix_seed(mix_seed(seed_, static_cast<std::uint64_t>(id)), k);
      v[k] = static_cast<double>(bits >> 11) * 0x1.0p-52 - 1.0;
    }
    return v;
  }

  std::size_t dimension() const override { return dim_; }

 private:
  static constexpr std::size_t kPiece = 4;
  std::uint64_t seed_;
  std::size_t dim_;
};

/// Embedding table exported from a real model:
///   {"vocab_size": V, "dim": d, "tokens": [{"id": 0, "text": "pick", "vector": [...]}, ...]}
/// Words are split into the longest table pieces left to right; "<unk>",
/// when present, covers bytes no piece matches.
class TableEmbeddingProvider final : public EmbeddingProvider {
 public:
  static TableEmbeddingProvider load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open embedding table '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse, "embedding table '" + path + "': " + e.what());
    }
  }

  static TableEmbeddingProvider from_json(const nlohmann::json& j) try {
    TableEmbeddingProvider t;
    t.dim_ = j.at("dim").get<std::size_t>();
    if (t.dim_ == 0) throw Error(ErrorKind::parse, "embedding table has dimension 0");
    const auto& tokens = j.at("tokens");
    if (j.contains("vocab_size") && j["vocab_size"].get<std::size_t>() != tokens.size()) {
      throw Error(ErrorKind::parse, "embedding table vocab_size does not match its records");
    }
    for (const auto& rec : tokens) {
      const auto id = rec.at("id").get<TokenId>();
      auto text = rec.at("text").get<std::string>();
      auto vec = rec.at("vector").get<Embedding>();
      if (vec.size() != t.dim_) {
        throw Error(ErrorKind::parse, "token '" + text + "' has a vector of the wrong dimension");
      }
      t.max_piece_ = std::max(t.max_piece_, text.size());
      if (!t.by_text_.emplace(std::move(text), id).second ||
          !t.vectors_.emplace(id, std::move(vec)).second) {
        throw Error(ErrorKind::parse, "duplicate token in embedding table");
      }
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("bad embedding table: ") + e.what());
  }

  std::vector<TokenId> tokenize(std::string_view text) const override {
    std::vector<TokenId> ids;
    const auto unk = by_text_.find("<unk>");
    for (auto word : detail::split_words(text)) {
      std::size_t i = 0;
      while (i < word.size()) {
        std::size_t len = std::min(max_piece_, word.size() - i);
        for (; len > 0; --len) {
          auto it = by_text_.find(std::string(word.substr(i, len)));
          if (it != by_text_.end()) {
            ids.push_back(it->second);
            break;
          }
        }
        if (len == 0) {
          if (unk == by_text_.end()) {
            throw Error(ErrorKind::invalid,
                        "cannot tokenize '" + std::string(word) + "' with this table");
          }
          ids.push_back(unk->second);
          len = 1;
        }
        i += len;
      }
    }
    return ids;
  }

  Embedding embed(TokenId id) const override {
    auto it = vectors_.find(id);
    if (it == vectors_.end()) throw Error(ErrorKind::invalid, "unknown token id " + std::to_string(id));
    return it->second;
  }

  std::size_t dimension() const override { return dim_; }

 private:
  TableEmbeddingProvider() = default;

  std::size_t dim_ = 0;
  std::size_t max_piece_ = 0;
  std::map<std::string, TokenId, std::less<>> by_text_;
  std::map<TokenId, Embedding> vectors_;
};

/// Probability-weighted soft embedding of an uncertain word:
///   sum over candidates w of  p(w) * mean(e_t for t in tokenize(w)).
/// Weights are used as given, without renormalization.
inline Embedding embed_word(const TimedWord& word, const EmbeddingProvider& provider) {
  const std::size_t d = provider.dimension();
  Embedding out(d, 0.0);
  for (const auto& c : word.candidates()) {
    const auto ids = provider.tokenize(c.token);
    if (ids.empty()) {
      throw Error(ErrorKind::invalid, "candidate '" + c.token + "' tokenizes to nothing");
    }
    Embedding mean(d, 0.0);
    for (TokenId id : ids) {
      const auto e = provider.embed(id);
      for (std::size_t k = 0; k < d; ++k) mean[k] += e[k];
    }
    const double scale = c.weight / static_cast<double>(ids.size());
    for (std::size_t k = 0; k < d; ++k) out[k] += scale * mean[k];
  }
  return out;
}

/// Row-major [1, N, d] model input.
class SoftPrompt {
 public:
  SoftPrompt(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
    if (dim_ == 0 || data_.size() % dim_ != 0) {
      throw Error(ErrorKind::invalid, "soft prompt data is not a whole number of rows");
    }
  }

  std::size_t rows() const noexcept { return data_.size() / dim_; }
  std::size_t dim() const noexcept { return dim_; }
  std::array<std::size_t, 3> shape() const noexcept { return {1, rows(), dim_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> data() const noexcept { return data_; }

  friend bool operator==(const SoftPrompt&, const SoftPrompt&) = default;

 private:
  std::size_t dim_;
  std::vector<double> data_;
};

/// Soft vectors for the merged words only.
inline SoftPrompt build_soft_tokens(const MergedSentence& s, const EmbeddingProvider& provider) {
  std::vector<double> data;
  data.reserve(s.size() * provider.dimension());
  for (const auto& mw : s.words()) {
    const auto v = embed_word(mw.word, provider);
    data.insert(data.end(), v.begin(), v.end());
  }
  return SoftPrompt(provider.dimension(), std::move(data));
}

/// Hard embeddings of every system-prompt token followed by one soft vector
/// per merged word.
inline SoftPrompt build_soft_prompt(std::string_view system_prompt, const MergedSentence& s,
                                    const EmbeddingProvider& provider) {
  if (system_prompt.empty()) throw Error(ErrorKind::usage, "system prompt is empty");
  const std::size_t d = provider.dimension();
  const auto ids = provider.tokenize(system_prompt);
  std::vector<double> data;
  data.reserve((ids.size() + s.size()) * d);
  for (TokenId id : ids) {
    const auto e = provider.embed(id);
    if (e.size() != d) throw Error(ErrorKind::invalid, "provider returned a vector of the wrong size");
    data.insert(data.end(), e.begin(), e.end());
  }
  const auto soft = build_soft_tokens(s, provider);
  data.insert(data.end(), soft.data().begin(), soft.data().end());
  return SoftPrompt(d, std::move(data));
}

// ---------------------------------------------------------------------------
// NumPy .npy export (format 1.0, little-endian float64, C order).

inline void write_npy(std::ostream& out, const SoftPrompt& sp) {
  static_assert(std::endian::native == std::endian::little, "npy writer assumes little-endian");
  const auto shape = sp.shape();
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(shape[0]) + ", " + std::to_string(shape[1]) + ", " +
                       std::to_string(shape[2]) + "), }";
  // Magic (6) + version (2) + length (2) + header must be a multiple of 64.
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(sp.data().data()),
            static_cast<std::streamsize>(sp.data().size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::io, "failed to write soft prompt");
}

inline SoftPrompt read_npy(std::istream& in) {
  char magic[10];
  if (!in.read(magic, 10) || std::memcmp(magic, "\x93NUMPY\x01\x00", 8) != 0) {
    throw Error(ErrorKind::parse, "not an npy 1.0 file");
  }
  const std::size_t len = static_cast<unsigned char>(magic[8]) |
                          (static_cast<std::size_t>(static_cast<unsigned char>(magic[9])) << 8);
  std::string header(len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(len))) {
    throw Error(ErrorKind::parse, "truncated npy header");
  }
  if (header.find("'<f8'") == std::string::npos || header.find("False") == std::string::npos) {
    throw Error(ErrorKind::parse, "npy file is not C-ordered float64");
  }
  const auto open = header.find('(');
  const auto close = header.find(')', open);
  std::vector<std::size_t> dims;
  std::istringstream shape(header.substr(open + 1, close - open - 1));
  for (std::string part; std::getline(shape, part, ',');) {
    if (part.find_first_not_of(' ') != std::string::npos) dims.push_back(std::stoul(part));
  }
  if (dims.size() != 3 || dims[0] != 1) throw Error(ErrorKind::parse, "npy shape is not [1, N, d]");
  std::vector<double> data(dims[1] * dims[2]);
  if (!in.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double)))) {
    throw Error(ErrorKind::parse, "truncated npy data");
  }
  return SoftPrompt(dims[2] == 0 ? 1 : dims[2], std::move(data));
}

}  // namespace fusemerge

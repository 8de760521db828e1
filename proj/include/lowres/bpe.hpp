#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"
#include "lowres/text.hpp"
#include "lowres/utf8.hpp"

namespace lowres {

/// U+2581 LOWER ONE EIGHTH BLOCK, prefixed to word-initial pieces.
inline const std::string kWordBoundary = "\xE2\x96\x81";

/// Joint BPE model: an ordered merge list and a dense piece vocabulary.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  std::vector<std::string> pieces;                    // id -> piece
  std::unordered_map<std::string, std::size_t> vocab;  // piece -> id
  std::string marker = kWordBoundary;
  std::size_t vocab_size = 32000;

  bool contains(const std::string& piece) const { return vocab.count(piece) != 0; }

  void add_piece(const std::string& piece) {
    if (vocab.emplace(piece, pieces.size()).second) pieces.push_back(piece);
  }
};

namespace detail {

using Symbols = std::vector<std::string>;
using SymbolPair = std::pair<std::string, std::string>;

}  // namespace detail

/// Trains merges over whitespace-separated words from every given text
/// source. Each word starts as [marker+c0, c1, ..., ck]; the most frequent
/// adjacent pair is merged until the vocabulary reaches `vocab_size` or no
/// pair occurs twice. Frequency ties go to the lexicographically smallest
/// pair.
///
/// The base inventory is every character seen plus its marker form, so any
/// seen word can always be segmented from the vocabulary.
inline BpeModel train_bpe(const std::vector<MonoCorpus>& sides, std::size_t vocab_size = 32000) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& side : sides)
    for (const auto& line : side.lines)
      for (auto w : split_tokens(line)) {
        if (w.find(kWordBoundary) != std::string_view::npos)
          throw Error("bpe: training text contains the word-boundary marker");
        ++word_freq[std::string(w)];
      }
  if (word_freq.empty()) throw Error("bpe: training text is empty");

  BpeModel model;
  model.vocab_size = vocab_size;

  std::set<std::string> chars;
  std::vector<detail::Symbols> words;
  std::vector<std::size_t> freqs;
  for (const auto& [w, n] : word_freq) {
    auto cs = utf8::characters(w);
    chars.insert(cs.begin(), cs.end());
    cs[0] = kWordBoundary + cs[0];
    words.push_back(std::move(cs));
    freqs.push_back(n);
  }
  const std::size_t base = 2 * chars.size();
  if (vocab_size < base)
    throw Error("bpe: vocab_size " + std::to_string(vocab_size) + " is smaller than the base inventory of " +
                std::to_string(base) + " pieces (" + std::to_string(chars.size()) + " characters and their marker forms)");
  for (const auto& c : chars) model.add_piece(c);
  for (const auto& c : chars) model.add_piece(kWordBoundary + c);

  // pair -> frequency, plus an ordered index (-freq, pair) for selection
  std::map<detail::SymbolPair, long long> pair_freq;
  std::map<detail::SymbolPair, std::set<std::size_t>> where;
  for (std::size_t w = 0; w < words.size(); ++w)
    for (std::size_t i = 0; i + 1 < words[w].size(); ++i) {
      detail::SymbolPair p{words[w][i], words[w][i + 1]};
      pair_freq[p] += static_cast<long long>(freqs[w]);
      where[p].insert(w);
    }
  std::set<std::pair<long long, detail::SymbolPair>> ranked;
  for (const auto& [p, n] : pair_freq) ranked.emplace(-n, p);

  const auto adjust = [&](const detail::SymbolPair& p, long long delta, std::size_t w) {
    auto it = pair_freq.find(p);
    long long old = it == pair_freq.end() ? 0 : it->second;
    if (old != 0) ranked.erase({-old, p});
    long long now = old + delta;
    if (now > 0) {
      pair_freq[p] = now;
      ranked.emplace(-now, p);
    } else if (it != pair_freq.end()) {
      pair_freq.erase(it);
    }
    if (delta > 0) where[p].insert(w);
  };

  while (model.pieces.size() < vocab_size && !ranked.empty()) {
    const auto [neg, best] = *ranked.begin();
    if (-neg < 2) break;
    const std::string merged = best.first + best.second;
    model.merges.push_back(best);
    model.add_piece(merged);

    const std::set<std::size_t> affected = std::move(where[best]);
    where.erase(best);
    for (std::size_t w : affected) {
      auto& sym = words[w];
      const long long f = static_cast<long long>(freqs[w]);
      bool hit = false;
      for (std::size_t i = 0; i + 1 < sym.size(); ++i)
        if (sym[i] == best.first && sym[i + 1] == best.second) {
          hit = true;
          break;
        }
      if (!hit) continue;
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) adjust({sym[i], sym[i + 1]}, -f, w);
      detail::Symbols next;
      next.reserve(sym.size());
      for (std::size_t i = 0; i < sym.size(); ++i) {
        if (i + 1 < sym.size() && sym[i] == best.first && sym[i + 1] == best.second) {
          next.push_back(merged);
          ++i;
        } else {
          next.push_back(sym[i]);
        }
      }
      sym = std::move(next);
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) adjust({sym[i], sym[i + 1]}, f, w);
    }
  }
  return model;
}

inline BpeModel train_bpe(const Corpus& corpus, std::size_t vocab_size = 32000) {
  return train_bpe(std::vector<MonoCorpus>{source_side(corpus), target_side(corpus)}, vocab_size);
}

/// Segments one word: merges are applied lowest rank first, all occurrences
/// of the chosen pair left to right, until no ranked pair remains.
inline std::vector<std::string> encode_word(const BpeModel& model, std::string_view word,
                                            const std::map<detail::SymbolPair, std::size_t>& rank) {
  auto sym = utf8::characters(word);
  if (sym.empty()) return {};
  sym[0] = model.marker + sym[0];
  while (sym.size() > 1) {
    std::size_t best_rank = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = rank.find({sym[i], sym[i + 1]});
      if (it != rank.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == static_cast<std::size_t>(-1)) break;
    const auto& [a, b] = model.merges[best_rank];
    std::vector<std::string> next;
    next.reserve(sym.size());
    for (std::size_t i = 0; i < sym.size(); ++i) {
      if (i + 1 < sym.size() && sym[i] == a && sym[i + 1] == b) {
        next.push_back(a + b);
        ++i;
      } else {
        next.push_back(sym[i]);
      }
    }
    sym = std::move(next);
  }
  return sym;
}

/// Reusable encoder holding the merge-rank index.
class BpeEncoder {
 public:
  explicit BpeEncoder(const BpeModel& model) : model_(model) {
    for (std::size_t i = 0; i < model.merges.size(); ++i) rank_.emplace(model.merges[i], i);
  }

  std::vector<std::string> encode(std::string_view text) const {
    std::vector<std::string> out;
    for (auto w : split_tokens(text)) {
      auto it = cache_.find(w);
      if (it == cache_.end()) it = cache_.emplace(std::string(w), encode_word(model_, w, rank_)).first;
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
  }

 private:
  const BpeModel& model_;
  std::map<detail::SymbolPair, std::size_t> rank_;
  mutable std::map<std::string, std::vector<std::string>, std::less<>> cache_;
};

inline std::vector<std::string> encode(const BpeModel& model, std::string_view text) {
  return BpeEncoder(model).encode(text);
}

/// Concatenates pieces, turns each marker into a space and drops the leading
/// space.
inline std::string decode(const BpeModel& model, const std::vector<std::string>& pieces) {
  std::string joined;
  for (const auto& p : pieces) joined += p;
  std::string out;
  out.reserve(joined.size());
  std::size_t i = 0;
  while (i < joined.size()) {
    if (joined.compare(i, model.marker.size(), model.marker) == 0) {
      out.push_back(' ');
      i += model.marker.size();
    } else {
      out.push_back(joined[i++]);
    }
  }
  if (!out.empty() && out.front() == ' ') out.erase(out.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Model file:
//
//   #bpe-model-v1
//   vocab_size <n>
//   marker <marker>
//   merges <count>
//   <left> <right>        one per merge, in order
//   vocab <count>
//   <piece>               one per id, in id order
//
// Fields are TAB-separated. Pieces never contain whitespace.

inline constexpr std::string_view kBpeHeader = "#bpe-model-v1";

inline std::string format_bpe_model(const BpeModel& m) {
  std::string out;
  out += kBpeHeader;
  out += '\n';
  out += "vocab_size\t" + std::to_string(m.vocab_size) + '\n';
  out += "marker\t" + m.marker + '\n';
  out += "merges\t" + std::to_string(m.merges.size()) + '\n';
  for (const auto& [a, b] : m.merges) out += a + '\t' + b + '\n';
  out += "vocab\t" + std::to_string(m.pieces.size()) + '\n';
  for (const auto& p : m.pieces) out += p + '\n';
  return out;
}

inline BpeModel parse_bpe_model(const std::string& data) {
  auto lines = detail::split_lines(data);
  std::size_t i = 0;
  const auto next = [&](std::string_view key) {
    if (i >= lines.size()) throw Error("bpe model: truncated before '" + std::string(key) + "'");
    auto f = split_on(lines[i], '\t');
    if (f.size() != 2 || f[0] != key)
      throw Error("bpe model line " + std::to_string(i + 1) + ": expected '" + std::string(key) + "'");
    ++i;
    return f[1];
  };
  const auto count = [&](const std::string& s) -> std::size_t {
    try {
      std::size_t pos = 0;
      auto v = std::stoull(s, &pos);
      if (pos != s.size()) throw Error("");
      return static_cast<std::size_t>(v);
    } catch (...) {
      throw Error("bpe model line " + std::to_string(i) + ": invalid count '" + s + "'");
    }
  };
  if (lines.empty() || lines[0] != kBpeHeader) throw Error("bpe model: missing '#bpe-model-v1' header");
  i = 1;
  BpeModel m;
  m.vocab_size = count(next("vocab_size"));
  m.marker = next("marker");
  const std::size_t nmerges = count(next("merges"));
  for (std::size_t k = 0; k < nmerges; ++k, ++i) {
    if (i >= lines.size()) throw Error("bpe model: truncated merge list");
    auto f = split_on(lines[i], '\t');
    if (f.size() != 2) throw Error("bpe model line " + std::to_string(i + 1) + ": expected a merge pair");
    m.merges.emplace_back(f[0], f[1]);
  }
  const std::size_t npieces = count(next("vocab"));
  for (std::size_t k = 0; k < npieces; ++k, ++i) {
    if (i >= lines.size()) throw Error("bpe model: truncated vocabulary");
    m.add_piece(lines[i]);
  }
  if (m.pieces.size() != npieces) throw Error("bpe model: duplicate vocabulary entries");
  return m;
}

inline void write_bpe_model(const BpeModel& m, const std::filesystem::path& path) {
  detail::write_file_atomic(path, format_bpe_model(m));
}

inline BpeModel read_bpe_model(const std::filesystem::path& path) {
  return parse_bpe_model(detail::read_file(path));
}

/// Applies the model to both sides; pieces are joined by single spaces.
inline Corpus encode_corpus(const BpeModel& model, const Corpus& corpus) {
  BpeEncoder enc(model);
  Corpus out = corpus;
  for (auto& p : out.items) {
    p.source = join(enc.encode(p.source), " ");
    p.target = join(enc.encode(p.target), " ");
  }
  return out;
}

inline Corpus decode_corpus(const BpeModel& model, const Corpus& corpus) {
  Corpus out = corpus;
  for (auto& p : out.items) {
    auto s = split_tokens(p.source);
    auto t = split_tokens(p.target);
    p.source = decode(model, std::vector<std::string>(s.begin(), s.end()));
    p.target = decode(model, std::vector<std::string>(t.begin(), t.end()));
  }
  return out;
}

}  // namespace lowres

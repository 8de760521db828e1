#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"
#include "lowres/report.hpp"
#include "lowres/text.hpp"
#include "lowres/utf8.hpp"

namespace lowres {

struct CleaningConfig {
  std::size_t max_tokens = 80;
  std::size_t max_consecutive_repeats = 3;
  double min_distinct_ratio = 0.3;
  std::size_t distinct_ratio_min_tokens = 10;
  bool drop_empty = true;

  void validate() const {
    if (max_tokens < 1) throw Error("cleaning: max_tokens must be >= 1");
    if (max_consecutive_repeats < 2) throw Error("cleaning: max_consecutive_repeats must be >= 2");
    if (!(min_distinct_ratio > 0.0 && min_distinct_ratio <= 1.0))
      throw Error("cleaning: min_distinct_ratio must be in (0, 1]");
  }
};

namespace detail {

// General categories Cc and Cf (Unicode 13).
inline constexpr std::pair<char32_t, char32_t> kControlOrFormat[] = {
    {0x0, 0x1F},       {0x7F, 0x9F},       {0xAD, 0xAD},       {0x600, 0x605},
    {0x61C, 0x61C},    {0x6DD, 0x6DD},     {0x70F, 0x70F},     {0x8E2, 0x8E2},
    {0x180E, 0x180E},  {0x200B, 0x200F},   {0x202A, 0x202E},   {0x2060, 0x2064},
    {0x2066, 0x206F},  {0xFEFF, 0xFEFF},   {0xFFF9, 0xFFFB},   {0x110BD, 0x110BD},
    {0x110CD, 0x110CD}, {0x13430, 0x13438}, {0x1BCA0, 0x1BCA3}, {0x1D173, 0x1D17A},
    {0xE0001, 0xE0001}, {0xE0020, 0xE007F},
};

inline bool is_control_or_format(char32_t cp) {
  for (const auto& [lo, hi] : kControlOrFormat) {
    if (cp < lo) return false;
    if (cp <= hi) return true;
  }
  return false;
}

inline char32_t to_halfwidth(char32_t cp) {
  if (cp >= 0xFF01 && cp <= 0xFF5E) return cp - 0xFEE0;
  if (cp == 0x3000 || cp == 0xA0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x202F ||
      cp == 0x205F)
    return 0x20;
  return cp;
}

/// Parses the entity body between '&' and ';'. Returns nullopt for anything
/// that is not one of the five named entities or a valid numeric reference.
inline std::optional<char32_t> entity_value(std::u32string_view body) {
  if (body == U"amp") return U'&';
  if (body == U"lt") return U'<';
  if (body == U"gt") return U'>';
  if (body == U"quot") return U'"';
  if (body == U"apos") return U'\'';
  if (body.size() < 2 || body[0] != U'#') return std::nullopt;
  body.remove_prefix(1);
  int base = 10;
  if (body[0] == U'x' || body[0] == U'X') {
    base = 16;
    body.remove_prefix(1);
  }
  if (body.empty() || body.size() > 8) return std::nullopt;
  std::uint32_t v = 0;
  for (char32_t c : body) {
    int d;
    if (c >= U'0' && c <= U'9') d = static_cast<int>(c - U'0');
    else if (base == 16 && c >= U'a' && c <= U'f') d = static_cast<int>(c - U'a') + 10;
    else if (base == 16 && c >= U'A' && c <= U'F') d = static_cast<int>(c - U'A') + 10;
    else return std::nullopt;
    v = v * static_cast<std::uint32_t>(base) + static_cast<std::uint32_t>(d);
  }
  if (v == 0 || v > 0x10FFFF || (v >= 0xD800 && v <= 0xDFFF)) return std::nullopt;
  return static_cast<char32_t>(v);
}

/// One pass of control removal, width mapping and entity decoding.
inline std::u32string normalize_pass(const std::u32string& in) {
  std::u32string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    char32_t cp = in[i];
    if (cp == U'\t') {
      out.push_back(U' ');
      continue;
    }
    if (is_control_or_format(cp)) continue;
    cp = to_halfwidth(cp);
    if (cp == U'&') {
      // entity names/digits are ASCII, so the raw ';' is the terminator
      const std::size_t semi = in.find(U';', i + 1);
      if (semi != std::u32string::npos && semi - i <= 12) {
        if (auto v = entity_value(std::u32string_view(in).substr(i + 1, semi - i - 1))) {
          out.push_back(*v);
          i = semi;
          continue;
        }
      }
    }
    out.push_back(cp);
  }
  return out;
}

}  // namespace detail

/// Removes invisible characters, decodes XML entities, maps fullwidth forms
/// and Unicode spaces to ASCII and collapses spaces. Decoding repeats until
/// nothing changes, so the result never contains a decodable entity; every
/// decode shortens the text, which bounds the number of passes.
inline std::string normalize_text(std::string_view text) {
  std::u32string cur = utf8::decode(text);
  while (true) {
    std::u32string next = detail::normalize_pass(cur);
    if (next == cur) break;
    cur = std::move(next);
  }
  std::u32string collapsed;
  collapsed.reserve(cur.size());
  for (char32_t cp : cur) {
    if (cp == U' ' && (collapsed.empty() || collapsed.back() == U' ')) continue;
    collapsed.push_back(cp);
  }
  while (!collapsed.empty() && collapsed.back() == U' ') collapsed.pop_back();
  return utf8::encode(collapsed);
}

/// Keeps the first occurrence of each exact (source, target) pair.
inline Corpus dedup(const Corpus& corpus) {
  Corpus out = corpus.like();
  std::unordered_set<std::string> seen;
  seen.reserve(corpus.size() * 2);
  for (const auto& p : corpus.items) {
    // TAB cannot appear in a TSV field, but two-file corpora may carry one;
    // length-prefixing keeps the key unambiguous either way.
    std::string key = std::to_string(p.source.size()) + ':' + p.source + p.target;
    if (seen.insert(std::move(key)).second) out.items.push_back(p);
  }
  return out;
}

inline MonoCorpus dedup(const MonoCorpus& mono) {
  MonoCorpus out{mono.lang, {}};
  std::unordered_set<std::string_view> seen;
  for (const auto& line : mono.lines)
    if (seen.insert(line).second) out.lines.push_back(line);
  return out;
}

inline bool exceeds_length(std::string_view s, const CleaningConfig& cfg) {
  return count_tokens(s) > cfg.max_tokens;
}

/// True for degenerate repetitive text: a token repeated
/// max_consecutive_repeats times in a row, or (for long enough sentences) too
/// few distinct tokens.
inline bool is_repetitive(std::string_view s, const CleaningConfig& cfg) {
  const auto toks = split_tokens(s);
  std::size_t run = 1;
  for (std::size_t i = 1; i < toks.size(); ++i) {
    run = toks[i] == toks[i - 1] ? run + 1 : 1;
    if (run >= cfg.max_consecutive_repeats) return true;
  }
  if (toks.size() >= cfg.distinct_ratio_min_tokens && !toks.empty()) {
    std::unordered_set<std::string_view> distinct(toks.begin(), toks.end());
    const double ratio = static_cast<double>(distinct.size()) / static_cast<double>(toks.size());
    if (ratio < cfg.min_distinct_ratio) return true;
  }
  return false;
}

inline Corpus filter_length(const Corpus& corpus, const CleaningConfig& cfg) {
  Corpus out = corpus.like();
  for (const auto& p : corpus.items)
    if (!exceeds_length(p.source, cfg) && !exceeds_length(p.target, cfg)) out.items.push_back(p);
  return out;
}

inline Corpus filter_repeats(const Corpus& corpus, const CleaningConfig& cfg) {
  Corpus out = corpus.like();
  for (const auto& p : corpus.items)
    if (!is_repetitive(p.source, cfg) && !is_repetitive(p.target, cfg)) out.items.push_back(p);
  return out;
}

inline Corpus filter_empty(const Corpus& corpus) {
  Corpus out = corpus.like();
  for (const auto& p : corpus.items)
    if (count_tokens(p.source) > 0 && count_tokens(p.target) > 0) out.items.push_back(p);
  return out;
}

/// normalize -> dedup -> empty -> length -> repeats.
inline std::pair<Corpus, StageReport> clean_corpus(const Corpus& corpus, const CleaningConfig& cfg = {}) {
  cfg.validate();
  StageReport report{"clean", corpus.size(), 0, {}};
  Corpus cur = corpus.like();
  cur.items.reserve(corpus.size());
  for (const auto& p : corpus.items) {
    SentencePair q = p;
    q.source = normalize_text(p.source);
    q.target = normalize_text(p.target);
    cur.items.push_back(std::move(q));
  }
  const auto step = [&](const char* rule, Corpus next) {
    report.removed.emplace_back(rule, cur.size() - next.size());
    cur = std::move(next);
  };
  step("dedup", dedup(cur));
  if (cfg.drop_empty) step("empty", filter_empty(cur));
  step("length", filter_length(cur, cfg));
  step("repeats", filter_repeats(cur, cfg));
  report.output = cur.size();
  return {std::move(cur), std::move(report)};
}

inline std::pair<MonoCorpus, StageReport> clean_mono(const MonoCorpus& mono, const CleaningConfig& cfg = {}) {
  cfg.validate();
  StageReport report{"clean", mono.size(), 0, {}};
  MonoCorpus cur{mono.lang, {}};
  for (const auto& line : mono.lines) cur.lines.push_back(normalize_text(line));
  MonoCorpus next = dedup(cur);
  report.removed.emplace_back("dedup", cur.size() - next.size());
  cur = std::move(next);
  const auto keep = [&](const char* rule, auto pred) {
    MonoCorpus kept{cur.lang, {}};
    for (auto& l : cur.lines)
      if (pred(l)) kept.lines.push_back(std::move(l));
    report.removed.emplace_back(rule, cur.size() - kept.size());
    cur = std::move(kept);
  };
  if (cfg.drop_empty) keep("empty", [](const std::string& l) { return count_tokens(l) > 0; });
  keep("length", [&](const std::string& l) { return !exceeds_length(l, cfg); });
  keep("repeats", [&](const std::string& l) { return !is_repetitive(l, cfg); });
  report.output = cur.size();
  return {std::move(cur), std::move(report)};
}

}  // namespace lowres

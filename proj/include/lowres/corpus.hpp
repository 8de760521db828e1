#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lowres/error.hpp"
#include "lowres/text.hpp"

namespace lowres {

/// Short lowercase language identifier, e.g. "es", "arg", "arn", "ast".
class LangCode {
 public:
  LangCode() : code_("und") {}
  explicit LangCode(std::string code) : code_(std::move(code)) {
    if (!valid(code_)) throw Error("invalid language code '" + code_ + "' (expected [a-z]{2,8})");
  }

  static bool valid(std::string_view s) {
    if (s.size() < 2 || s.size() > 8) return false;
    for (char c : s)
      if (c < 'a' || c > 'z') return false;
    return true;
  }

  const std::string& str() const { return code_; }
  auto operator<=>(const LangCode&) const = default;

 private:
  std::string code_;
};

struct LanguagePair {
  LangCode source{"src"};
  LangCode target{"tgt"};
  auto operator<=>(const LanguagePair&) const = default;
};

enum class Provenance { Authentic, ForwardSynthetic, BackSynthetic, Transductive };

inline constexpr std::array<Provenance, 4> kAllProvenances = {
    Provenance::Authentic, Provenance::ForwardSynthetic, Provenance::BackSynthetic,
    Provenance::Transductive};

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Authentic: return "authentic";
    case Provenance::ForwardSynthetic: return "forward";
    case Provenance::BackSynthetic: return "back";
    case Provenance::Transductive: return "transductive";
  }
  return "authentic";
}

inline Provenance parse_provenance(std::string_view s) {
  for (Provenance p : kAllProvenances)
    if (to_string(p) == s) return p;
  throw Error("unknown provenance '" + std::string(s) + "'");
}

struct SentencePair {
  std::string source;
  std::string target;
  Provenance provenance = Provenance::Authentic;
  std::optional<double> align_score;  // mean per-token log-probability (nats)
  std::optional<double> sim_score;    // cosine-style similarity

  bool same_text(const SentencePair& o) const { return source == o.source && target == o.target; }
  bool operator==(const SentencePair&) const = default;
};

struct Corpus {
  LanguagePair pair;
  std::vector<SentencePair> items;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  /// Same pair, no items.
  Corpus like() const { return Corpus{pair, {}}; }
};

struct MonoCorpus {
  LangCode lang;
  std::vector<std::string> lines;

  std::size_t size() const { return lines.size(); }
  bool empty() const { return lines.empty(); }
};

enum class CorpusFormat { Tsv, TwoFile };

/// Plain TSV has two columns; Extended carries provenance and scores under a
/// `#bitext-v1` header line. Auto picks Extended only when a pair needs it.
enum class TsvFlavor { Auto, Plain, Extended };

inline constexpr std::string_view kExtendedHeader = "#bitext-v1";

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// LF-separated lines; a final LF does not start another line.
inline std::vector<std::string> split_lines(const std::string& data) {
  std::vector<std::string> lines;
  if (data.empty()) return lines;
  lines = split_on(data, '\n');
  if (data.back() == '\n') lines.pop_back();
  return lines;
}

inline void check_no_break(std::string_view text, std::size_t index) {
  if (text.find('\n') != std::string_view::npos || text.find('\r') != std::string_view::npos)
    throw Error("pair " + std::to_string(index) + " contains a line break");
}

/// Writes `data` to `path` through a sibling temp file and a rename, so the
/// destination is either the old content or the complete new one.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline std::string optional_score(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline std::optional<double> parse_score(const std::string& field, std::size_t line_no) {
  if (field.empty()) return std::nullopt;
  auto v = parse_double(field);
  if (!v || !std::isfinite(*v))
    throw Error("line " + std::to_string(line_no) + ": invalid score '" + field + "'");
  return v;
}

}  // namespace detail

inline bool needs_extended(const Corpus& c) {
  for (const auto& p : c.items)
    if (p.provenance != Provenance::Authentic || p.align_score || p.sim_score) return true;
  return false;
}

/// Parses TSV text (plain or extended) already loaded in memory.
inline Corpus parse_tsv(const std::string& data, LanguagePair lp = {}) {
  Corpus c{lp, {}};
  auto lines = detail::split_lines(data);
  std::size_t first = 0;
  bool extended = false;
  if (!lines.empty() && lines[0].rfind(kExtendedHeader, 0) == 0) {
    extended = true;
    first = 1;
    auto header = split_on(lines[0], '\t');
    if (header.size() == 3 && LangCode::valid(header[1]) && LangCode::valid(header[2]))
      c.pair = LanguagePair{LangCode(header[1]), LangCode(header[2])};
  }
  c.items.reserve(lines.size() - first);
  for (std::size_t i = first; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    auto fields = split_on(lines[i], '\t');
    SentencePair p;
    if (!extended) {
      if (fields.size() != 2)
        throw Error("line " + std::to_string(line_no) + ": expected 2 tab-separated fields, found " +
                    std::to_string(fields.size()));
    } else {
      if (fields.size() != 5)
        throw Error("line " + std::to_string(line_no) + ": expected 5 tab-separated fields, found " +
                    std::to_string(fields.size()));
      try {
        p.provenance = parse_provenance(fields[2]);
      } catch (const Error& e) {
        throw Error("line " + std::to_string(line_no) + ": " + e.what());
      }
      p.align_score = detail::parse_score(fields[3], line_no);
      p.sim_score = detail::parse_score(fields[4], line_no);
    }
    p.source = std::move(fields[0]);
    p.target = std::move(fields[1]);
    c.items.push_back(std::move(p));
  }
  return c;
}

inline std::string format_tsv(const Corpus& c, TsvFlavor flavor = TsvFlavor::Auto) {
  const bool extended =
      flavor == TsvFlavor::Extended || (flavor == TsvFlavor::Auto && needs_extended(c));
  std::string out;
  if (extended) {
    out += kExtendedHeader;
    out += '\t' + c.pair.source.str() + '\t' + c.pair.target.str() + '\n';
  }
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    const auto& p = c.items[i];
    detail::check_no_break(p.source, i);
    detail::check_no_break(p.target, i);
    if (p.source.find('\t') != std::string::npos || p.target.find('\t') != std::string::npos)
      throw Error("pair " + std::to_string(i) + " contains a tab, which collides with the TSV delimiter");
    out += p.source;
    out += '\t';
    out += p.target;
    if (extended) {
      out += '\t';
      out += to_string(p.provenance);
      out += '\t' + detail::optional_score(p.align_score);
      out += '\t' + detail::optional_score(p.sim_score);
    }
    out += '\n';
  }
  return out;
}

/// TSV reader. Plain files need exactly two fields per row; files starting
/// with the `#bitext-v1` header carry provenance and scores.
inline Corpus read_tsv(const std::filesystem::path& path, LanguagePair lp = {}) {
  return parse_tsv(detail::read_file(path), lp);
}

inline Corpus read_two_file(const std::filesystem::path& src, const std::filesystem::path& tgt,
                            LanguagePair lp = {}) {
  auto s = detail::split_lines(detail::read_file(src));
  auto t = detail::split_lines(detail::read_file(tgt));
  if (s.size() != t.size())
    throw Error("line count mismatch: source has " + std::to_string(s.size()) + " lines, target has " +
                std::to_string(t.size()));
  Corpus c{lp, {}};
  c.items.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    SentencePair p;
    p.source = std::move(s[i]);
    p.target = std::move(t[i]);
    c.items.push_back(std::move(p));
  }
  return c;
}

/// `paths` holds one path for Tsv and two (source, target) for TwoFile.
inline Corpus read_parallel(const std::vector<std::filesystem::path>& paths, CorpusFormat format,
                            LanguagePair lp = {}) {
  if (format == CorpusFormat::Tsv) {
    if (paths.size() != 1) throw Error("TSV corpus needs exactly one path");
    return read_tsv(paths[0], lp);
  }
  if (paths.size() != 2) throw Error("two-file corpus needs a source and a target path");
  return read_two_file(paths[0], paths[1], lp);
}

inline void write_tsv(const Corpus& c, const std::filesystem::path& path,
                      TsvFlavor flavor = TsvFlavor::Auto) {
  detail::write_file_atomic(path, format_tsv(c, flavor));
}

inline void write_two_file(const Corpus& c, const std::filesystem::path& src,
                           const std::filesystem::path& tgt) {
  std::string s, t;
  for (std::size_t i = 0; i < c.items.size(); ++i) {
    detail::check_no_break(c.items[i].source, i);
    detail::check_no_break(c.items[i].target, i);
    s += c.items[i].source + '\n';
    t += c.items[i].target + '\n';
  }
  detail::write_file_atomic(src, s);
  detail::write_file_atomic(tgt, t);
}

inline void write_parallel(const Corpus& c, const std::vector<std::filesystem::path>& paths,
                           CorpusFormat format) {
  if (format == CorpusFormat::Tsv) {
    if (paths.size() != 1) throw Error("TSV corpus needs exactly one path");
    write_tsv(c, paths[0]);
    return;
  }
  if (paths.size() != 2) throw Error("two-file corpus needs a source and a target path");
  write_two_file(c, paths[0], paths[1]);
}

inline MonoCorpus read_mono(const std::filesystem::path& path, LangCode lang = {}) {
  return MonoCorpus{std::move(lang), detail::split_lines(detail::read_file(path))};
}

inline std::string format_mono(const MonoCorpus& m) {
  std::string out;
  for (std::size_t i = 0; i < m.lines.size(); ++i) {
    detail::check_no_break(m.lines[i], i);
    out += m.lines[i];
    out += '\n';
  }
  return out;
}

inline void write_mono(const MonoCorpus& m, const std::filesystem::path& path) {
  detail::write_file_atomic(path, format_mono(m));
}

inline MonoCorpus source_side(const Corpus& c) {
  MonoCorpus m{c.pair.source, {}};
  for (const auto& p : c.items) m.lines.push_back(p.source);
  return m;
}

inline MonoCorpus target_side(const Corpus& c) {
  MonoCorpus m{c.pair.target, {}};
  for (const auto& p : c.items) m.lines.push_back(p.target);
  return m;
}

inline Corpus concat(const Corpus& a, const Corpus& b) {
  Corpus out = a;
  out.items.insert(out.items.end(), b.items.begin(), b.items.end());
  return out;
}

struct StatsReport {
  std::size_t total = 0;
  std::map<Provenance, std::size_t> by_provenance;
  std::size_t source_tokens = 0;
  std::size_t target_tokens = 0;

  std::size_t count(Provenance p) const {
    auto it = by_provenance.find(p);
    return it == by_provenance.end() ? 0 : it->second;
  }

  StatsReport& operator+=(const StatsReport& o) {
    total += o.total;
    for (const auto& [k, v] : o.by_provenance) by_provenance[k] += v;
    source_tokens += o.source_tokens;
    target_tokens += o.target_tokens;
    return *this;
  }
  friend StatsReport operator+(StatsReport a, const StatsReport& b) { return a += b; }
  bool operator==(const StatsReport& o) const {
    for (Provenance p : kAllProvenances)
      if (count(p) != o.count(p)) return false;
    return total == o.total && source_tokens == o.source_tokens && target_tokens == o.target_tokens;
  }
};

inline StatsReport corpus_stats(const Corpus& c) {
  StatsReport r;
  r.total = c.items.size();
  for (const auto& p : c.items) {
    ++r.by_provenance[p.provenance];
    r.source_tokens += count_tokens(p.source);
    r.target_tokens += count_tokens(p.target);
  }
  return r;
}

}  // namespace lowres

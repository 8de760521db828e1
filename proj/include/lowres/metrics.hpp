#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lowres/error.hpp"
#include "lowres/utf8.hpp"

namespace lowres {

namespace metrics_detail {

/// Whitespace as understood by Python's str.split().
inline bool is_unicode_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || (c >= 0x1C && c <= 0x20) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

inline std::vector<std::u32string> split_words(const std::u32string& s) {
  std::vector<std::u32string> out;
  std::u32string cur;
  for (char32_t c : s) {
    if (is_unicode_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// {-~  [-`  space-&  (-+  :-@  /
inline bool is_13a_symbol(unsigned char c) {
  return (c >= 0x7B && c <= 0x7E) || (c >= 0x5B && c <= 0x60) || (c >= 0x20 && c <= 0x26) ||
         (c >= 0x28 && c <= 0x2B) || (c >= 0x3A && c <= 0x40) || c == 0x2F;
}

}  // namespace metrics_detail

/// The WMT "13a" tokenizer (mteval-v13a rules as used by the standard
/// scorer): entity unescaping, symbol isolation, and period/comma splitting
/// except inside numbers.
inline std::vector<std::string> tokenize_13a(std::string_view input) {
  using namespace metrics_detail;
  std::string line(input);
  // rstrip, as the reference scorer does before tokenizing
  {
    auto cps = utf8::decode(line);
    while (!cps.empty() && is_unicode_space(cps.back())) cps.pop_back();
    line = utf8::encode(cps);
  }
  replace_all(line, "<skipped>", "");
  replace_all(line, "-\n", "");
  replace_all(line, "\n", " ");
  if (line.find('&') != std::string::npos) {
    replace_all(line, "&quot;", "\"");
    replace_all(line, "&amp;", "&");
    replace_all(line, "&lt;", "<");
    replace_all(line, "&gt;", ">");
  }
  line = " " + line + " ";

  std::string a;
  for (char c : line) {
    if (is_13a_symbol(static_cast<unsigned char>(c))) {
      a += ' ';
      a += c;
      a += ' ';
    } else {
      a += c;
    }
  }
  // ([^0-9])([.,]) -> "\1 \2 "
  std::string b;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i + 1 < a.size() && !is_digit(a[i]) && (a[i + 1] == '.' || a[i + 1] == ',')) {
      b += a[i];
      b += ' ';
      b += a[i + 1];
      b += ' ';
      ++i;
    } else {
      b += a[i];
    }
  }
  // ([.,])([^0-9]) -> " \1 \2"
  std::string c;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (i + 1 < b.size() && (b[i] == '.' || b[i] == ',') && !is_digit(b[i + 1])) {
      c += ' ';
      c += b[i];
      c += ' ';
      c += b[i + 1];
      ++i;
    } else {
      c += b[i];
    }
  }
  // ([0-9])(-) -> "\1 \2 "
  std::string d;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i + 1 < c.size() && is_digit(c[i]) && c[i + 1] == '-') {
      d += c[i];
      d += " - ";
      ++i;
    } else {
      d += c[i];
    }
  }
  std::vector<std::string> out;
  for (const auto& w : split_words(utf8::decode(d))) out.push_back(utf8::encode(w));
  return out;
}

struct BleuResult {
  double score = 0.0;                      // 0..100
  std::array<double, 4> precisions{};      // 0..100
  double brevity_penalty = 1.0;
  std::size_t sys_len = 0;
  std::size_t ref_len = 0;
  std::array<std::size_t, 4> correct{};
  std::array<std::size_t, 4> total{};
};

/// Corpus BLEU, single reference, n = 1..4, no smoothing: any order without
/// matches gives 0. Orders for which the hypotheses hold no n-grams at all
/// (very short output) are left out of the geometric mean.
inline BleuResult bleu_corpus(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size())
    throw Error("bleu: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw Error("bleu: no sentences");
  BleuResult r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto hyp = tokenize_13a(hypotheses[s]);
    const auto ref = tokenize_13a(references[s]);
    if (ref.empty()) throw Error("bleu: reference line " + std::to_string(s + 1) + " is empty");
    r.sys_len += hyp.size();
    r.ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::unordered_map<std::string, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < n; ++k) key += (k ? " " : "") + ref[i + k];
        ++ref_counts[key];
      }
      std::unordered_map<std::string, std::size_t> hyp_counts;
      for (std::size_t i = 0; i + n <= hyp.size(); ++i) {
        std::string key;
        for (std::size_t k = 0; k < n; ++k) key += (k ? " " : "") + hyp[i + k];
        ++hyp_counts[key];
      }
      for (const auto& [g, c] : hyp_counts) {
        r.total[n - 1] += c;
        auto it = ref_counts.find(g);
        if (it != ref_counts.end()) r.correct[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (r.sys_len < r.ref_len)
    r.brevity_penalty = r.sys_len > 0 ? std::exp(1.0 - static_cast<double>(r.ref_len) / static_cast<double>(r.sys_len)) : 0.0;
  bool any_zero = false;
  double log_sum = 0.0;
  std::size_t order = 0;
  for (std::size_t n = 0; n < 4 && r.total[n] > 0; ++n, ++order) {
    if (r.correct[n] == 0) {
      any_zero = true;
      continue;
    }
    const double frac = static_cast<double>(r.correct[n]) / static_cast<double>(r.total[n]);
    r.precisions[n] = 100.0 * frac;
    log_sum += std::log(frac);
  }
  // geometric mean of the fractions, so a perfect match is exactly 100
  r.score = any_zero || order == 0 ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(order));
  return r;
}

namespace metrics_detail {

inline constexpr std::string_view kPunct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

inline bool is_punct(char32_t c) { return c < 0x80 && kPunct.find(static_cast<char>(c)) != std::string_view::npos; }

/// Splits a single leading or trailing ASCII punctuation mark off each word.
inline std::vector<std::u32string> chrf_words(const std::u32string& sent) {
  std::vector<std::u32string> out;
  for (auto& w : split_words(sent)) {
    if (w.size() == 1) {
      out.push_back(w);
    } else if (is_punct(w.back())) {
      out.push_back(w.substr(0, w.size() - 1));
      out.push_back(w.substr(w.size() - 1));
    } else if (is_punct(w.front())) {
      out.push_back(w.substr(0, 1));
      out.push_back(w.substr(1));
    } else {
      out.push_back(w);
    }
  }
  return out;
}

using NgramCounts = std::map<std::u32string, std::size_t>;

inline constexpr int kCharOrder = 6;
inline constexpr int kWordOrder = 2;
inline constexpr double kBeta = 2.0;

inline std::vector<NgramCounts> chrf_ngrams(const std::string& sent) {
  const auto cps = utf8::decode(sent);
  std::u32string chars;
  for (char32_t c : cps)
    if (!is_unicode_space(c)) chars.push_back(c);
  std::vector<NgramCounts> out;
  for (int n = 1; n <= kCharOrder; ++n) {
    NgramCounts c;
    for (std::size_t i = 0; i + n <= chars.size(); ++i) ++c[chars.substr(i, n)];
    out.push_back(std::move(c));
  }
  const auto words = chrf_words(cps);
  for (int n = 1; n <= kWordOrder; ++n) {
    NgramCounts c;
    for (std::size_t i = 0; i + n <= words.size(); ++i) {
      std::u32string key;
      for (int k = 0; k < n; ++k) {
        if (k) key += U' ';
        key += words[i + k];
      }
      ++c[key];
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace metrics_detail

/// Corpus chrF++: character n-grams 1..6 (whitespace removed) plus word
/// n-grams 1..2, beta = 2. Statistics are summed over the corpus; precision
/// and recall are averaged over the orders that have both hypothesis and
/// reference n-grams.
inline double chrf_corpus(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  using namespace metrics_detail;
  if (hypotheses.size() != references.size())
    throw Error("chrf: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw Error("chrf: no sentences");
  constexpr int kOrders = kCharOrder + kWordOrder;
  std::array<double, 3 * kOrders> stats{};
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto h = chrf_ngrams(hypotheses[s]);
    const auto r = chrf_ngrams(references[s]);
    for (int o = 0; o < kOrders; ++o) {
      std::size_t hyp = 0, ref = 0, match = 0;
      for (const auto& [g, c] : h[o]) {
        hyp += c;
        auto it = r[o].find(g);
        if (it != r[o].end()) match += std::min(c, it->second);
      }
      for (const auto& kv : r[o]) ref += kv.second;
      stats[3 * o] += r[o].empty() ? 0.0 : static_cast<double>(hyp);
      stats[3 * o + 1] += static_cast<double>(ref);
      stats[3 * o + 2] += static_cast<double>(match);
    }
  }
  const double factor = kBeta * kBeta;
  double avg_prec = 0.0, avg_rec = 0.0;
  int effective = 0;
  for (int o = 0; o < kOrders; ++o) {
    const double n_hyp = stats[3 * o], n_ref = stats[3 * o + 1], n_match = stats[3 * o + 2];
    if (n_hyp > 0 && n_ref > 0) {
      avg_prec += n_match / n_hyp;
      avg_rec += n_match / n_ref;
      ++effective;
    }
  }
  if (effective == 0) return 0.0;
  avg_prec /= effective;
  avg_rec /= effective;
  if (avg_prec + avg_rec == 0.0) return 0.0;
  return 100.0 * (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec);
}

struct MetricReport {
  BleuResult bleu;
  double chrf_pp = 0.0;
};

inline MetricReport evaluate(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references) {
  return MetricReport{bleu_corpus(hypotheses, references), chrf_corpus(hypotheses, references)};
}

}  // namespace lowres

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"
#include "lowres/random.hpp"

namespace lowres {

/// Temperature upsampling ratios.
///
///   p_l = n_l / sum(n),  lambda_l = (1 / p_l) * p_l^(1/T) / sum_k p_k^(1/T)
///
/// evaluated as N * n_l^(1/T - 1) / sum_k n_k^(1/T), which is algebraically
/// identical and exact for T = 1.
inline std::vector<double> compute_ratios(const std::vector<std::uint64_t>& sizes, double temperature = 2.0) {
  if (sizes.empty()) throw Error("ratios: no languages given");
  if (!(temperature >= 1.0) || !std::isfinite(temperature))
    throw Error("ratios: temperature must be a finite value >= 1");
  for (std::size_t i = 0; i < sizes.size(); ++i)
    if (sizes[i] == 0) throw Error("ratios: size of language " + std::to_string(i) + " is zero");
  if (temperature == 1.0) return std::vector<double>(sizes.size(), 1.0);

  const double alpha = 1.0 / temperature;
  double total = 0.0;
  double tempered = 0.0;
  for (auto n : sizes) {
    total += static_cast<double>(n);
    tempered += std::pow(static_cast<double>(n), alpha);
  }
  std::vector<double> out;
  out.reserve(sizes.size());
  for (auto n : sizes) out.push_back(total * std::pow(static_cast<double>(n), alpha - 1.0) / tempered);
  return out;
}

/// Tag tokens per target language, "<code>" by default.
struct TagScheme {
  std::map<LangCode, std::string> tags;

  static TagScheme for_languages(const std::vector<LangCode>& langs) {
    TagScheme s;
    for (const auto& l : langs) s.tags[l] = "<" + l.str() + ">";
    return s;
  }

  const std::string& tag(const LangCode& lang) const {
    auto it = tags.find(lang);
    if (it == tags.end()) throw Error("tag: no tag defined for language '" + lang.str() + "'");
    return it->second;
  }
};

struct SamplingPlan {
  std::vector<LangCode> languages;
  std::vector<std::uint64_t> sizes;
  double temperature = 2.0;
  std::uint64_t seed = 0;
  std::vector<double> ratios;

  static SamplingPlan make(std::vector<LangCode> languages, std::vector<std::uint64_t> sizes,
                           double temperature, std::uint64_t seed) {
    if (languages.size() != sizes.size()) throw Error("sampling plan: languages and sizes differ in length");
    SamplingPlan p{std::move(languages), std::move(sizes), temperature, seed, {}};
    p.ratios = compute_ratios(p.sizes, temperature);
    return p;
  }

  /// Plan over the given corpora keyed by their target language.
  static SamplingPlan for_corpora(const std::map<LangCode, Corpus>& corpora, double temperature,
                                  std::uint64_t seed) {
    std::vector<LangCode> langs;
    std::vector<std::uint64_t> sizes;
    for (const auto& [l, c] : corpora) {
      langs.push_back(l);
      sizes.push_back(c.size());
    }
    return make(std::move(langs), std::move(sizes), temperature, seed);
  }

  double ratio(const LangCode& lang) const {
    for (std::size_t i = 0; i < languages.size(); ++i)
      if (languages[i] == lang) return ratios[i];
    throw Error("upsample: language '" + lang.str() + "' is not in the sampling plan");
  }
};

/// Replicates the corpus floor(ratio) times, then appends each pair once more
/// with probability frac(ratio). The Bernoulli draw for pair i is keyed by
/// (seed, stream, i).
inline Corpus upsample_corpus(const Corpus& corpus, double ratio, std::uint64_t seed, std::string_view stream) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw Error("upsample: ratio must be finite and >= 0");
  const double whole = std::floor(ratio);
  const double frac = ratio - whole;
  Corpus out = corpus.like();
  const auto copies = static_cast<std::size_t>(whole);
  out.items.reserve(static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(corpus.size()))));
  for (std::size_t c = 0; c < copies; ++c) out.items.insert(out.items.end(), corpus.items.begin(), corpus.items.end());
  if (frac > 0.0)
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (keyed_uniform(seed, stream, i) < frac) out.items.push_back(corpus.items[i]);
  return out;
}

inline std::map<LangCode, Corpus> upsample(const std::map<LangCode, Corpus>& corpora, const SamplingPlan& plan) {
  std::map<LangCode, Corpus> out;
  for (const auto& [lang, corpus] : corpora)
    out.emplace(lang, upsample_corpus(corpus, plan.ratio(lang), plan.seed, lang.str()));
  return out;
}

/// Prefixes every source with the target-language tag ("<arg> Hola ...").
/// Not idempotent: apply once.
inline Corpus tag_language(const Corpus& corpus, const TagScheme& scheme, const LangCode& tgt) {
  const std::string& tag = scheme.tag(tgt);
  Corpus out = corpus;
  for (auto& p : out.items) p.source = tag + " " + p.source;
  return out;
}

/// Concatenation followed by a seeded Fisher-Yates shuffle. The language
/// pair of the first corpus labels the result.
inline Corpus mix_shuffle(const std::vector<Corpus>& corpora, std::uint64_t seed) {
  Corpus out;
  if (!corpora.empty()) out = corpora.front().like();
  std::size_t total = 0;
  for (const auto& c : corpora) total += c.size();
  out.items.reserve(total);
  for (const auto& c : corpora) out.items.insert(out.items.end(), c.items.begin(), c.items.end());
  seeded_shuffle(out.items, seed);
  return out;
}

}  // namespace lowres

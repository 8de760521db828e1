#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"
#include "lowres/process.hpp"
#include "lowres/random.hpp"
#include "lowres/sampling.hpp"

namespace lowres {

/// External translation command with a declared direction.
struct Translator {
  LanguagePair direction;
  LineCommand command;

  std::vector<std::string> translate(const std::vector<std::string>& lines) const {
    return run_line_command(command, lines, "translator");
  }
};

/// k distinct lines sampled without replacement, kept in original order.
inline MonoCorpus sample_monolingual(const MonoCorpus& mono, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error("sample: k must be positive");
  if (k > mono.size())
    throw Error("sample: k = " + std::to_string(k) + " exceeds corpus size " + std::to_string(mono.size()));
  std::vector<std::size_t> idx(mono.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates: the first k slots hold the sample
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(bounded(rng, idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  MonoCorpus out{mono.lang, {}};
  out.lines.reserve(k);
  for (auto i : idx) out.lines.push_back(mono.lines[i]);
  return out;
}

namespace detail {

inline void check_direction(const Translator& t, const LangCode& from, std::string_view op) {
  if (t.direction.source != from)
    throw Error(std::string(op) + ": translator reads " + t.direction.source.str() + " but the input is " + from.str());
}

}  // namespace detail

/// Synthetic pairs with authentic source: (line i, teacher(line i)).
inline Corpus forward_translate(const MonoCorpus& mono, const Translator& teacher) {
  detail::check_direction(teacher, mono.lang, "ft");
  Corpus out{teacher.direction, {}};
  if (mono.empty()) return out;
  auto hyp = teacher.translate(mono.lines);
  out.items.reserve(mono.size());
  for (std::size_t i = 0; i < mono.size(); ++i)
    out.items.push_back({mono.lines[i], std::move(hyp[i]), Provenance::ForwardSynthetic, {}, {}});
  return out;
}

/// Synthetic pairs with authentic target: (reverse(line i), line i).
inline Corpus back_translate(const MonoCorpus& target_mono, const Translator& reverse) {
  detail::check_direction(reverse, target_mono.lang, "bt");
  Corpus out{LanguagePair{reverse.direction.target, reverse.direction.source}, {}};
  if (target_mono.empty()) return out;
  auto hyp = reverse.translate(target_mono.lines);
  out.items.reserve(target_mono.size());
  for (std::size_t i = 0; i < target_mono.size(); ++i)
    out.items.push_back({std::move(hyp[i]), target_mono.lines[i], Provenance::BackSynthetic, {}, {}});
  return out;
}

struct MixSpec {
  double authentic = 1.0;
  double forward = 1.0;
  double back = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    for (double w : {authentic, forward, back})
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error("mix: weights must be finite and non-negative");
    if (authentic == 0.0 && forward == 0.0 && back == 0.0) throw Error("mix: all weights are zero");
  }
};

/// Each class is upsampled with its weight as the ratio, then everything is
/// concatenated (authentic, forward, back) and shuffled.
inline Corpus mix_training_set(const Corpus& authentic, const Corpus& ft, const Corpus& bt, const MixSpec& spec) {
  spec.validate();
  if (ft.pair != authentic.pair || bt.pair != authentic.pair)
    throw Error("mix: corpora do not share the direction " + authentic.pair.source.str() + "-" +
                authentic.pair.target.str());
  return mix_shuffle({upsample_corpus(authentic, spec.authentic, spec.seed, "authentic"),
                      upsample_corpus(ft, spec.forward, spec.seed, "forward"),
                      upsample_corpus(bt, spec.back, spec.seed, "back")},
                     spec.seed);
}

/// Pairs every dev source with each model's hypothesis for it, drops exact
/// duplicates (first occurrence wins; model-major order).
inline Corpus assemble_transductive_set(const MonoCorpus& dev_sources, const std::vector<MonoCorpus>& model_outputs,
                                        LanguagePair pair = {}) {
  for (std::size_t m = 0; m < model_outputs.size(); ++m)
    if (model_outputs[m].size() != dev_sources.size())
      throw Error("tel-assemble: model " + std::to_string(m) + " has " + std::to_string(model_outputs[m].size()) +
                  " lines, dev set has " + std::to_string(dev_sources.size()));
  Corpus out{pair, {}};
  std::unordered_set<std::string> seen;
  for (const auto& hyp : model_outputs)
    for (std::size_t i = 0; i < dev_sources.size(); ++i) {
      std::string key = std::to_string(dev_sources.lines[i].size()) + ':' + dev_sources.lines[i] + hyp.lines[i];
      if (seen.insert(std::move(key)).second)
        out.items.push_back({dev_sources.lines[i], hyp.lines[i], Provenance::Transductive, {}, {}});
    }
  return out;
}

}  // namespace lowres

#pragma once

// Synthetic corpora shared by the unit tests and the acceptance binary.

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lowres/lowres.hpp"

namespace fixtures {

using lowres::Corpus;
using lowres::SentencePair;

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(lowres::bounded(rng, n)); }

inline std::string word_from(std::mt19937_64& rng, std::size_t len) {
  static const std::string letters = "abcdefghijklmnopqrstuvwxyz";
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += letters[pick(rng, letters.size())];
  return w;
}

/// A one-to-one word dictionary and sentences translated word by word.
struct DictionaryCorpus {
  std::vector<std::string> source_words;
  std::vector<std::string> target_words;  // target_words[i] translates source_words[i]
  Corpus corpus;
};

inline DictionaryCorpus dictionary_corpus(std::size_t words, std::size_t sentences, std::size_t max_len,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DictionaryCorpus d;
  for (std::size_t i = 0; i < words; ++i) {
    d.source_words.push_back("s" + std::to_string(i) + word_from(rng, 3));
    d.target_words.push_back("t" + std::to_string(i) + word_from(rng, 4));
  }
  d.corpus.pair = lowres::LanguagePair{lowres::LangCode("es"), lowres::LangCode("arg")};
  for (std::size_t s = 0; s < sentences; ++s) {
    const std::size_t len = 1 + pick(rng, max_len);
    std::vector<std::string> src, tgt;
    for (std::size_t k = 0; k < len; ++k) {
      const auto w = pick(rng, words);
      src.push_back(d.source_words[w]);
      tgt.push_back(d.target_words[w]);
    }
    d.corpus.items.push_back(SentencePair{lowres::join(src, " "), lowres::join(tgt, " ")});
  }
  return d;
}

/// Same sources, targets rotated so no pair is a translation.
inline Corpus mismatched(const Corpus& c) {
  Corpus out = c;
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < n; ++i) out.items[i].target = c.items[(i + n / 2 + 1) % n].target;
  return out;
}

inline std::string repeat_words(const std::string& stem, std::size_t n) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back(stem + std::to_string(i));
  return lowres::join(w, " ");
}

/// 20 pairs: 14 distinct clean pairs (one of them exactly 80 tokens long),
/// 3 that become duplicates after normalization, 2 overlong, 1 repetitive.
inline Corpus cleaning_fixture() {
  Corpus c;
  const auto add = [&](std::string s, std::string t) { c.items.push_back(SentencePair{std::move(s), std::move(t)}); };
  add("the house is red", "la casa es roja");
  add("good morning", "buenos dias");
  add("the dog runs fast", "el perro corre rapido");
  add("I like green tea", "me gusta el te verde");
  add("where is the station", "donde esta la estacion");
  add("we eat bread", "comemos pan");
  add("she reads a book", "ella lee un libro");
  add("the sky is blue", "el cielo es azul");
  add(repeat_words("w", 80), repeat_words("p", 80));
  add("open the window", "abre la ventana");
  add("it is cold today", "hoy hace frio");
  add("my brother sings", "mi hermano canta");
  add("Tom &amp; Ana", "Tom y Ana");
  add("thank you very much", "muchas gracias");
  // duplicates after normalization
  add("the house is red", "la casa es roja");
  add("\xEF\xBD\x87\xEF\xBD\x8F\xEF\xBD\x8F\xEF\xBD\x84 morning", "buenos dias");  // fullwidth "good"
  add("  the dog   runs fast ", "el perro corre rapido");
  // too long
  add(repeat_words("x", 81), "demasiado largo");
  add("short source", repeat_words("y", 85));
  // repetitive
  add("yes yes yes yes no", "si si si si no");
  return c;
}

/// Writes a three-pair fixture of 60/200/240 pairs (500 total) plus mono,
/// dev and model-output files, and a manifest running the whole default
/// stage graph. Returns the manifest path.
struct PipelineFixture {
  std::filesystem::path manifest;
  std::filesystem::path dir;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

inline std::string lines_of(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& l : v) s += l + "\n";
  return s;
}

// Scores a TSV pair by the token-count ratio of its sides (shorter / longer).
inline const char* kLengthRatioScorer =
    "awk -F '\\t' '{a=split($1,x,\" \"); b=split($2,y,\" \"); if (a>b) {t=a; a=b; b=t}; "
    "if (b==0) print 0; else printf \"%.6f\\n\", a/b}'";

inline PipelineFixture pipeline_fixture(const std::filesystem::path& dir, std::uint64_t seed = 7) {
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(seed);
  const auto base = dictionary_corpus(300, 1000, 12, seed);
  std::size_t next = 0;
  const auto take = [&](std::size_t n, const std::string& tgt) {
    Corpus c;
    c.pair = lowres::LanguagePair{lowres::LangCode("es"), lowres::LangCode(tgt)};
    for (std::size_t i = 0; i < n; ++i) {
      auto p = base.corpus.items[next++];
      // a few noisy pairs for the cleaning and filtering stages to find
      switch (pick(rng, 25)) {
        case 0: p.target = repeat_words("z", 90); break;
        case 1: p.target += " " + p.target; break;
        case 2: p.source = "ok ok ok ok ok"; break;
        case 3: if (i > 0) p = c.items[i - 1]; break;
        default: break;
      }
      c.items.push_back(p);
    }
    return c;
  };
  const std::map<std::string, std::size_t> sizes{{"arg", 60}, {"arn", 200}, {"ast", 240}};
  for (const auto& [lang, n] : sizes) lowres::write_tsv(take(n, lang), dir / ("es-" + lang + ".tsv"));

  std::vector<std::string> mono_es, mono_arg, dev;
  for (std::size_t i = 0; i < 80; ++i) mono_es.push_back(base.corpus.items[next++].source);
  for (std::size_t i = 0; i < 80; ++i) mono_arg.push_back(base.corpus.items[next++].target);
  for (std::size_t i = 0; i < 20; ++i) dev.push_back(base.corpus.items[next++].source);
  write_text(dir / "mono.es", lines_of(mono_es));
  write_text(dir / "mono.arg", lines_of(mono_arg));
  write_text(dir / "dev.es", lines_of(dev));
  // three "models": the first copies, the others agree with it on some lines
  for (int m = 0; m < 3; ++m) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < dev.size(); ++i) out.push_back(i % 3 == static_cast<std::size_t>(m) ? dev[i] + " m" + std::to_string(m) : dev[i]);
    write_text(dir / ("hyp" + std::to_string(m) + ".arg"), lines_of(out));
  }

  lowres::json j;
  j["global"] = {{"seed", 20240601}, {"work_dir", "work"}, {"threads", 2}};
  auto& in = j["inputs"];
  for (const auto& [lang, n] : sizes) in["raw_" + lang] = {{"kind", "parallel"}, {"path", "es-" + lang + ".tsv"}, {"pair", "es-" + lang}};
  in["mono_es"] = {{"kind", "mono"}, {"path", "mono.es"}, {"lang", "es"}};
  in["mono_arg"] = {{"kind", "mono"}, {"path", "mono.arg"}, {"lang", "arg"}};
  in["dev_es"] = {{"kind", "mono"}, {"path", "dev.es"}, {"lang", "es"}};
  for (int m = 0; m < 3; ++m) in["hyp" + std::to_string(m)] = {{"kind", "mono"}, {"path", "hyp" + std::to_string(m) + ".arg"}};

  auto& st = j["stages"];
  for (const auto& [lang, n] : sizes) {
    st.push_back({{"name", "clean_" + lang}, {"op", "clean"}, {"inputs", {"raw_" + lang}}, {"outputs", {"clean_" + lang}}});
  }
  for (const auto& [lang, n] : sizes) {
    st.push_back({{"name", "align_" + lang}, {"op", "align-filter"}, {"inputs", {"clean_" + lang}},
                  {"outputs", {"aligned_" + lang}}, {"params", {{"percentile", 10}, {"iterations", 5}}}});
  }
  for (const auto& [lang, n] : sizes) {
    st.push_back({{"name", "denoise_" + lang}, {"op", "denoise"}, {"inputs", {"aligned_" + lang}},
                  {"outputs", {"denoised_" + lang}},
                  {"params", {{"threshold", 0.7}, {"scorer", "cmd"}, {"command", kLengthRatioScorer}}}});
  }
  st.push_back({{"name", "bpe"}, {"op", "bpe-train"}, {"inputs", {"denoised_arg", "denoised_arn", "denoised_ast", "mono_es", "mono_arg"}},
                {"outputs", {"bpe_model"}}, {"params", {{"vocab_size", 400}}}});
  for (const auto& [lang, n] : sizes) {
    st.push_back({{"name", "tag_" + lang}, {"op", "tag"}, {"inputs", {"denoised_" + lang}}, {"outputs", {"tagged_" + lang}}});
  }
  st.push_back({{"name", "upsample"}, {"op", "upsample"}, {"inputs", {"tagged_arg", "tagged_arn", "tagged_ast"}},
                {"outputs", {"up_arg", "up_arn", "up_ast"}}, {"params", {{"temperature", 2}}}});
  st.push_back({{"name", "pretrain_mix"}, {"op", "mix"}, {"inputs", {"up_arg", "up_arn", "up_ast"}}, {"outputs", {"pretrain"}}});
  st.push_back({{"name", "ft_arg"}, {"op", "ft"}, {"inputs", {"mono_es"}}, {"outputs", {"ft_arg"}},
                {"params", {{"pair", "es-arg"}, {"teacher_cmd", "cat"}, {"sample", 50}}}});
  st.push_back({{"name", "bt_arg"}, {"op", "bt"}, {"inputs", {"mono_arg"}}, {"outputs", {"bt_arg"}},
                {"params", {{"pair", "es-arg"}, {"reverse_cmd", "cat"}, {"batch_size", 16}, {"workers", 2}}}});
  st.push_back({{"name", "finetune_mix"}, {"op", "mix-train"}, {"inputs", {"denoised_arg", "ft_arg", "bt_arg"}},
                {"outputs", {"finetune"}}, {"params", {{"weights", {2.0, 1.0, 0.5}}}}});
  st.push_back({{"name", "tel"}, {"op", "tel-assemble"}, {"inputs", {"dev_es", "hyp0", "hyp1", "hyp2"}},
                {"outputs", {"tel_arg"}}, {"params", {{"pair", "es-arg"}}}});
  st.push_back({{"name", "encode_pretrain"}, {"op", "bpe-encode"}, {"inputs", {"pretrain", "bpe_model"}}, {"outputs", {"pretrain_bpe"}}});
  st.push_back({{"name", "encode_finetune"}, {"op", "bpe-encode"}, {"inputs", {"finetune", "bpe_model"}}, {"outputs", {"finetune_bpe"}}});

  write_text(dir / "pipeline.json", j.dump(2) + "\n");
  return {dir / "pipeline.json", dir};
}

}  // namespace fixtures

// Command-line front end: one subcommand per stage, plus `run` and
// `validate` for manifests. Exit status 0 ok, 1 bad arguments or manifest,
// 2 a stage failed while running.

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "lowres/lowres.hpp"

namespace fs = std::filesystem;
using namespace lowres;

namespace {

constexpr int kValidation = 1;
constexpr int kStageFailure = 2;

// Raised for anything wrong with the invocation itself.
struct UsageError : Error {
  using Error::Error;
};

// The body of each subcommand. `check` runs argument validation, `act` does
// the work; exceptions from the former map to exit 1, from the latter to 2.
struct Command {
  std::function<void()> check = [] {};
  std::function<void()> act;
};

template <class F>
auto checked(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

void require_files(const std::vector<std::string>& paths) {
  for (const auto& p : paths)
    if (!fs::exists(p)) throw UsageError("input not found: " + p);
}

CorpusFormat format_for(const std::vector<std::string>& paths, const std::string& what) {
  if (paths.size() == 1) return CorpusFormat::Tsv;
  if (paths.size() == 2) return CorpusFormat::TwoFile;
  throw UsageError(what + ": give one TSV file or a source/target file pair");
}

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

Corpus load_corpus(const std::vector<std::string>& paths, const std::string& pair) {
  auto c = read_parallel(as_paths(paths), format_for(paths, "--input"));
  if (!pair.empty()) c.pair = parse_language_pair(pair);
  return c;
}

void save_corpus(const Corpus& c, const std::vector<std::string>& paths) {
  write_parallel(c, as_paths(paths), format_for(paths, "--output"));
}

void add_pair_option(CLI::App* app, std::string& pair) {
  app->add_option("--pair", pair, "language pair such as es-arg");
}

void add_line_command(CLI::App* app, LineCommand& cmd) {
  app->add_option("--batch-size", cmd.batch_size, "lines per command invocation (0 = all at once)");
  app->add_option("--workers", cmd.workers, "concurrent command invocations")->check(CLI::PositiveNumber);
}

void check_pair(const std::string& pair) {
  if (!pair.empty()) checked([&] { return parse_language_pair(pair); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-resource MT corpus toolkit"};
  app.require_subcommand(1);
  std::vector<std::pair<CLI::App*, Command>> commands;
  const auto sub = [&](const std::string& name, const std::string& desc) {
    auto* s = app.add_subcommand(name, desc);
    commands.emplace_back(s, Command{});
    return std::make_pair(s, &commands.back().second);
  };
  commands.reserve(32);

  // clean
  std::vector<std::string> in, out;
  std::string pair;
  bool mono = false;
  CleaningConfig ccfg;
  {
    auto [s, c] = sub("clean", "normalize, deduplicate and filter a corpus");
    s->add_option("--input", in, "TSV file, or source and target files")->required();
    s->add_option("--output", out, "output file(s), same shape as --input")->required();
    s->add_flag("--mono", mono, "input is monolingual text");
    s->add_option("--max-tokens", ccfg.max_tokens);
    s->add_option("--max-repeats", ccfg.max_consecutive_repeats);
    s->add_option("--min-distinct-ratio", ccfg.min_distinct_ratio);
    s->add_option("--distinct-min-tokens", ccfg.distinct_ratio_min_tokens);
    add_pair_option(s, pair);
    c->check = [&] {
      require_files(in);
      checked([&] { ccfg.validate(); });
      check_pair(pair);
      if (mono && (in.size() != 1 || out.size() != 1)) throw UsageError("--mono takes one input and one output");
    };
    c->act = [&] {
      if (mono) {
        auto [m, rep] = clean_mono(read_mono(in[0]), ccfg);
        write_mono(m, out[0]);
        print_report(std::cerr, rep);
      } else {
        auto [cleaned, rep] = clean_corpus(load_corpus(in, pair), ccfg);
        save_corpus(cleaned, out);
        print_report(std::cerr, rep);
      }
    };
  }

  // align-train
  AlignTrainConfig acfg;
  bool reverse = false;
  std::string model_path;
  {
    auto [s, c] = sub("align-train", "train a directional alignment model");
    s->add_option("--input", in)->required();
    s->add_option("--output", model_path)->required();
    s->add_flag("--reverse", reverse, "train target-to-source");
    s->add_option("--iterations", acfg.iterations);
    s->add_option("--p0", acfg.p0);
    s->add_option("--tension", acfg.tension);
    s->add_option("--threads", acfg.threads);
    c->check = [&] {
      require_files(in);
      checked([&] { acfg.validate(); });
    };
    c->act = [&] {
      auto corpus = load_corpus(in, "");
      auto t = train_alignment_traced(reverse ? swap_sides(corpus) : corpus, acfg);
      write_alignment_model(t.model, model_path);
      for (std::size_t i = 0; i < t.log_likelihood.size(); ++i)
        std::cerr << "iteration " << i << " log-likelihood " << format_fixed(t.log_likelihood[i], 4) << "\n";
    };
  }

  // align-filter
  std::string fwd_path, rev_path;
  std::optional<double> percentile, threshold;
  {
    auto [s, c] = sub("align-filter", "drop poorly aligned pairs");
    s->add_option("--input", in)->required();
    s->add_option("--output", out)->required();
    s->add_option("--forward", fwd_path, "source-to-target model (trained on the input if omitted)");
    s->add_option("--reverse", rev_path, "target-to-source model");
    auto* p = s->add_option("--percentile", percentile, "drop this percentage of lowest-scoring pairs (default 10)");
    s->add_option("--threshold", threshold, "drop pairs scoring below this value")->excludes(p);
    s->add_option("--iterations", acfg.iterations);
    s->add_option("--threads", acfg.threads);
    c->check = [&] {
      require_files(in);
      if (fwd_path.empty() != rev_path.empty()) throw UsageError("give both --forward and --reverse, or neither");
      if (!fwd_path.empty()) require_files({fwd_path, rev_path});
      if (percentile && !(*percentile >= 0.0 && *percentile < 100.0))
        throw UsageError("--percentile must be in [0, 100)");
      checked([&] { acfg.validate(); });
    };
    c->act = [&] {
      auto corpus = load_corpus(in, "");
      AlignmentModel f, r;
      if (fwd_path.empty()) {
        f = train_alignment(corpus, acfg);
        r = train_alignment(swap_sides(corpus), acfg);
      } else {
        f = read_alignment_model(fwd_path);
        r = read_alignment_model(rev_path);
      }
      AlignFilterPolicy policy = PercentilePolicy{percentile.value_or(10.0)};
      if (threshold) policy = AbsolutePolicy{*threshold};
      auto [kept, rep] = filter_by_alignment(corpus, f, r, policy);
      save_corpus(kept, out);
      print_report(std::cerr, rep);
    };
  }

  // denoise
  DenoiseConfig dcfg;
  std::string scorer = "cmd", scorer_cmd, src_emb, tgt_emb;
  LineCommand lcmd;
  {
    auto [s, c] = sub("denoise", "drop pairs with low semantic similarity");
    s->add_option("--input", in)->required();
    s->add_option("--output", out)->required();
    s->add_option("--threshold", dcfg.threshold, "keep pairs scoring at least this much");
    s->add_option("--scorer", scorer)->check(CLI::IsMember({"cmd", "files"}));
    s->add_option("--scorer-cmd", scorer_cmd, "command reading TSV pairs, printing one score per line");
    s->add_option("--source-embeddings", src_emb);
    s->add_option("--target-embeddings", tgt_emb);
    add_line_command(s, lcmd);
    c->check = [&] {
      require_files(in);
      checked([&] { dcfg.validate(); });
      if (scorer == "cmd" && scorer_cmd.empty()) throw UsageError("--scorer cmd needs --scorer-cmd");
      if (scorer == "files") {
        if (src_emb.empty() || tgt_emb.empty())
          throw UsageError("--scorer files needs --source-embeddings and --target-embeddings");
        require_files({src_emb, tgt_emb});
      }
    };
    c->act = [&] {
      auto corpus = load_corpus(in, "");
      Corpus scored;
      if (scorer == "cmd") {
        lcmd.command = scorer_cmd;
        scored = score_corpus(corpus, ExternalScorer(lcmd));
      } else {
        scored = score_corpus(corpus, EmbeddingFileScorer::from_files(src_emb, tgt_emb));
      }
      auto [kept, rep] = filter_by_similarity(scored, dcfg);
      save_corpus(kept, out);
      print_report(std::cerr, rep);
    };
  }

  // bpe-train
  std::size_t vocab_size = 32000;
  std::vector<std::string> mono_inputs;
  {
    auto [s, c] = sub("bpe-train", "learn a joint BPE model");
    s->add_option("--input", in, "parallel TSV corpora (both sides are used)");
    s->add_option("--mono", mono_inputs, "monolingual text files");
    s->add_option("--vocab-size", vocab_size)->check(CLI::PositiveNumber);
    s->add_option("--output", model_path)->required();
    c->check = [&] {
      if (in.empty() && mono_inputs.empty()) throw UsageError("bpe-train needs --input or --mono");
      require_files(in);
      require_files(mono_inputs);
    };
    c->act = [&] {
      std::vector<MonoCorpus> sides;
      for (const auto& p : in) {
        auto corpus = read_tsv(p);
        sides.push_back(source_side(corpus));
        sides.push_back(target_side(corpus));
      }
      for (const auto& p : mono_inputs) sides.push_back(read_mono(p));
      auto m = train_bpe(sides, vocab_size);
      write_bpe_model(m, model_path);
      std::cerr << "merges " << m.merges.size() << "\nvocab " << m.pieces.size() << "\n";
    };
  }

  // bpe-encode / bpe-decode
  for (bool enc : {true, false}) {
    auto [s, c] = sub(enc ? "bpe-encode" : "bpe-decode", enc ? "split text into subword pieces" : "join pieces back into text");
    s->add_option("--model", model_path)->required();
    s->add_option("--input", in)->required();
    s->add_option("--output", out)->required();
    s->add_flag("--mono", mono, "input is monolingual text");
    c->check = [&] {
      require_files(in);
      require_files({model_path});
      if (mono && (in.size() != 1 || out.size() != 1)) throw UsageError("--mono takes one input and one output");
    };
    c->act = [&, enc] {
      const auto m = read_bpe_model(model_path);
      if (mono) {
        auto lines = read_mono(in[0]);
        BpeEncoder e(m);
        for (auto& l : lines.lines) l = enc ? join(e.encode(l), " ") : decode(m, [&] {
          std::vector<std::string> pieces;
          for (auto t : split_tokens(l)) pieces.emplace_back(t);
          return pieces;
        }());
        write_mono(lines, out[0]);
      } else {
        auto corpus = load_corpus(in, "");
        save_corpus(enc ? encode_corpus(m, corpus) : decode_corpus(m, corpus), out);
      }
    };
  }

  // ratios
  std::vector<std::string> sizes;
  double temperature = 2.0;
  {
    auto [s, c] = sub("ratios", "temperature-based upsampling ratios");
    s->add_option("--size", sizes, "lang=count, repeatable")->required();
    s->add_option("--temperature", temperature);
    c->check = [&] { checked([&] { return compute_ratios({1}, temperature); }); };
    c->act = [&] {
      std::vector<LangCode> langs;
      std::vector<std::uint64_t> counts;
      for (const auto& s : sizes) {
        const auto eq = s.find('=');
        const auto n = eq == std::string::npos ? std::nullopt : parse_double(s.substr(eq + 1));
        if (!n || *n < 0 || *n != static_cast<double>(static_cast<std::uint64_t>(*n)))
          throw UsageError("--size expects lang=count, got '" + s + "'");
        langs.push_back(checked([&] { return LangCode(s.substr(0, eq)); }));
        counts.push_back(static_cast<std::uint64_t>(*n));
      }
      const auto r = compute_ratios(counts, temperature);
      for (std::size_t i = 0; i < r.size(); ++i)
        std::cout << langs[i].str() << "\t" << counts[i] << "\t" << format_fixed(r[i], 4) << "\n";
    };
  }

  // upsample
  double ratio = 1.0;
  std::uint64_t seed = 0;
  {
    auto [s, c] = sub("upsample", "replicate a corpus by a real-valued ratio");
    s->add_option("--input", in)->required();
    s->add_option("--output", out)->required();
    s->add_option("--ratio", ratio)->required();
    s->add_option("--seed", seed)->required();
    c->check = [&] {
      require_files(in);
      if (!(ratio > 0.0) || !std::isfinite(ratio)) throw UsageError("--ratio must be positive");
    };
    c->act = [&] {
      auto corpus = load_corpus(in, "");
      save_corpus(upsample_corpus(corpus, ratio, seed, corpus.pair.target.str()), out);
    };
  }

  // tag
  std::string lang, tag;
  {
    auto [s, c] = sub("tag", "prepend a target-language tag to each source");
    s->add_option("--input", in)->required();
    s->add_option("--output", out)->required();
    s->add_option("--lang", lang, "target language")->required();
    s->add_option("--tag", tag, "tag token (default <lang>)");
    c->check = [&] {
      require_files(in);
      checked([&] { return LangCode(lang); });
    };
    c->act = [&] {
      LangCode l(lang);
      auto scheme = TagScheme::for_languages({l});
      if (!tag.empty()) scheme.tags[l] = tag;
      save_corpus(tag_language(load_corpus(in, ""), scheme, l), out);
    };
  }

  // mix
  std::string authentic, ft_path, bt_path;
  std::vector<double> weights{1.0, 1.0, 1.0};
  {
    auto [s, c] = sub("mix", "concatenate and shuffle corpora");
    s->add_option("--input", in, "corpora to concatenate and shuffle");
    s->add_option("--authentic", authentic, "authentic bitext for a training mix");
    s->add_option("--ft", ft_path, "forward-translated bitext");
    s->add_option("--bt", bt_path, "back-translated bitext");
    s->add_option("--weights", weights, "authentic,forward,back")->delimiter(',')->expected(3);
    s->add_option("--pair", pair, "label every input with this pair (plain TSV carries none)");
    s->add_option("--seed", seed)->required();
    s->add_option("--output", out)->required();
    c->check = [&] {
      const bool training = !authentic.empty() || !ft_path.empty() || !bt_path.empty();
      if (training == !in.empty()) throw UsageError("give either --input, or --authentic/--ft/--bt");
      check_pair(pair);
      if (training) {
        if (authentic.empty() || ft_path.empty() || bt_path.empty())
          throw UsageError("a training mix needs --authentic, --ft and --bt");
        require_files({authentic, ft_path, bt_path});
        checked([&] { MixSpec{weights[0], weights[1], weights[2], seed}.validate(); });
      } else {
        require_files(in);
      }
    };
    c->act = [&] {
      const auto load = [&](const std::string& p) { return load_corpus({p}, pair); };
      if (in.empty()) {
        MixSpec spec{weights[0], weights[1], weights[2], seed};
        save_corpus(mix_training_set(load(authentic), load(ft_path), load(bt_path), spec), out);
      } else {
        std::vector<Corpus> cs;
        for (const auto& p : in) cs.push_back(load(p));
        save_corpus(mix_shuffle(cs, seed), out);
      }
    };
  }

  // ft / bt
  std::string teacher_cmd;
  std::optional<std::size_t> sample;
  for (bool forward : {true, false}) {
    auto [s, c] = sub(forward ? "ft" : "bt", forward ? "forward-translate source monolingual text"
                                                     : "back-translate target monolingual text");
    s->add_option("--input", in, "monolingual text file")->required()->expected(1);
    s->add_option("--output", out)->required();
    s->add_option("--pair", pair, "translation direction of the final bitext, e.g. es-arg")->required();
    s->add_option(forward ? "--teacher-cmd" : "--reverse-cmd", teacher_cmd,
                  forward ? "source-to-target translator" : "target-to-source translator")
        ->required();
    s->add_option("--sample", sample, "translate only this many sampled lines");
    s->add_option("--seed", seed);
    add_line_command(s, lcmd);
    c->check = [&] {
      require_files(in);
      check_pair(pair);
      if (sample && *sample == 0) throw UsageError("--sample must be positive");
    };
    c->act = [&, forward] {
      const auto lp = parse_language_pair(pair);
      lcmd.command = teacher_cmd;
      auto m = read_mono(in[0], forward ? lp.source : lp.target);
      if (sample) m = sample_monolingual(m, std::min(*sample, m.size()), seed);
      Translator t{forward ? lp : LanguagePair{lp.target, lp.source}, lcmd};
      save_corpus(forward ? forward_translate(m, t) : back_translate(m, t), out);
    };
  }

  // tel-assemble
  std::string dev;
  std::vector<std::string> hyps;
  {
    auto [s, c] = sub("tel-assemble", "pair dev sources with several models' outputs");
    s->add_option("--dev", dev, "dev-set sources")->required();
    s->add_option("--hyp", hyps, "one output file per model")->required();
    s->add_option("--pair", pair)->required();
    s->add_option("--output", out)->required();
    c->check = [&] {
      require_files({dev});
      require_files(hyps);
      check_pair(pair);
    };
    c->act = [&] {
      std::vector<MonoCorpus> outputs;
      for (const auto& h : hyps) outputs.push_back(read_mono(h));
      auto set = assemble_transductive_set(read_mono(dev), outputs, parse_language_pair(pair));
      save_corpus(set, out);
      std::cerr << "pairs " << set.size() << "\n";
    };
  }

  // score
  std::string hyp_path, ref_path, metric = "both";
  {
    auto [s, c] = sub("score", "corpus BLEU and chrF++");
    s->add_option("--hyp", hyp_path)->required();
    s->add_option("--ref", ref_path)->required();
    s->add_option("--metric", metric)->check(CLI::IsMember({"bleu", "chrf++", "both"}));
    c->check = [&] { require_files({hyp_path, ref_path}); };
    c->act = [&] {
      const auto h = read_mono(hyp_path).lines;
      const auto r = read_mono(ref_path).lines;
      if (metric != "chrf++") {
        const auto b = bleu_corpus(h, r);
        std::cout << "BLEU = " << format_fixed(b.score, 4) << " (";
        for (std::size_t i = 0; i < b.precisions.size(); ++i)
          std::cout << (i ? "/" : "") << format_fixed(b.precisions[i], 4);
        std::cout << " BP = " << format_fixed(b.brevity_penalty, 4) << " hyp_len = " << b.sys_len
                  << " ref_len = " << b.ref_len << ")\n";
      }
      if (metric != "bleu") std::cout << "chrF++ = " << format_fixed(chrf_corpus(h, r), 4) << "\n";
    };
  }

  // run / validate
  std::string manifest_path;
  for (bool execute : {true, false}) {
    auto [s, c] = sub(execute ? "run" : "validate", execute ? "run a pipeline manifest" : "check a pipeline manifest");
    s->add_option("manifest", manifest_path)->required();
    c->act = [&, execute] {
      PipelineManifest m;
      try {
        m = load_manifest(manifest_path);
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
      const auto diags = validate_manifest(m);
      for (const auto& d : diags) std::cerr << d.str() << "\n";
      if (!diags.empty()) throw UsageError(std::to_string(diags.size()) + " problem(s) in " + manifest_path);
      if (!execute) {
        std::cout << "ok\n";
        return;
      }
      auto report = run_manifest(m);
      print_run_report(std::cout, report);
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  for (auto& [s, c] : commands) {
    if (!s->parsed()) continue;
    try {
      c.check();
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kValidation;
    }
    try {
      c.act();
    } catch (const UsageError& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kValidation;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kStageFailure;
    }
  }
  return 0;
}

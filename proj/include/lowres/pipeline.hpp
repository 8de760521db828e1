#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "lowres/alignment.hpp"
#include "lowres/augment.hpp"
#include "lowres/bpe.hpp"
#include "lowres/cleaning.hpp"
#include "lowres/corpus.hpp"
#include "lowres/denoise.hpp"
#include "lowres/manifest.hpp"
#include "lowres/random.hpp"
#include "lowres/report.hpp"
#include "lowres/sampling.hpp"

namespace lowres {

using Dataset = std::variant<Corpus, MonoCorpus, BpeModel, AlignmentModel>;

inline DatasetKind kind_of(const Dataset& d) {
  switch (d.index()) {
    case 0: return DatasetKind::Parallel;
    case 1: return DatasetKind::Mono;
    case 2: return DatasetKind::Bpe;
    default: return DatasetKind::Align;
  }
}

inline std::size_t item_count(const Dataset& d) {
  return std::visit(
      [](const auto& v) -> std::size_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Corpus> || std::is_same_v<T, MonoCorpus>) return v.size();
        else if constexpr (std::is_same_v<T, BpeModel>) return v.pieces.size();
        else {
          std::size_t n = 0;
          for (const auto& row : v.ttable) n += row.second.size();
          return n;
        }
      },
      d);
}

inline std::string serialize(const Dataset& d) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Corpus>) return format_tsv(v);
        else if constexpr (std::is_same_v<T, MonoCorpus>) return format_mono(v);
        else if constexpr (std::is_same_v<T, BpeModel>) return format_bpe_model(v);
        else return format_alignment_model(v);
      },
      d);
}

inline std::string_view file_extension(DatasetKind k) {
  switch (k) {
    case DatasetKind::Parallel: return ".tsv";
    case DatasetKind::Mono: return ".txt";
    case DatasetKind::Bpe: return ".bpe";
    case DatasetKind::Align: return ".align";
  }
  return ".dat";
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

/// Typed, range-checked access to a stage's params object. finish() rejects
/// keys nobody asked for, which catches typos in manifests.
class Params {
 public:
  Params(const json& j, std::string where) : j_(j), where_(std::move(where)) {}

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key, double def, double lo = -1e308, double hi = 1e308) {
    used_.insert(key);
    if (!j_.contains(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) fail(key, "value " + format_double(x) + " out of range [" + format_double(lo) + ", " + format_double(hi) + "]");
    return x;
  }

  std::uint64_t integer(const std::string& key, std::uint64_t def, std::uint64_t lo = 0) {
    used_.insert(key);
    if (!j_.contains(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      fail(key, "expected a non-negative integer");
    const auto x = v.get<std::uint64_t>();
    if (x < lo) fail(key, "must be >= " + std::to_string(lo));
    return x;
  }

  std::optional<std::uint64_t> optional_integer(const std::string& key, std::uint64_t lo = 0) {
    if (!j_.contains(key)) {
      used_.insert(key);
      return std::nullopt;
    }
    return integer(key, 0, lo);
  }

  std::string string(const std::string& key, const std::string& def) {
    used_.insert(key);
    if (!j_.contains(key)) return def;
    if (!j_.at(key).is_string()) fail(key, "expected a string");
    return j_.at(key).get<std::string>();
  }

  std::string required_string(const std::string& key) {
    if (!j_.contains(key)) fail(key, "required");
    return string(key, "");
  }

  bool boolean(const std::string& key, bool def) {
    used_.insert(key);
    if (!j_.contains(key)) return def;
    if (!j_.at(key).is_boolean()) fail(key, "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::vector<std::string> strings(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) return {};
    try {
      return detail::string_list(j_.at(key), where_ + ": params." + key);
    } catch (const Error&) {
      fail(key, "expected a list of strings");
    }
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def) {
    used_.insert(key);
    if (!j_.contains(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) fail(key, "expected a list of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(key, "expected a list of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw Error(where_ + ": params." + k + ": unknown parameter");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw Error(where_ + ": params." + key + ": " + msg);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

struct StageResult {
  std::vector<Dataset> outputs;
  StageReport report;
  json details = json::object();
};

using StageRunner = std::function<StageResult(const std::vector<const Dataset*>&)>;

struct StageEnv {
  std::uint64_t seed = 0;  // derived per stage
  unsigned threads = 1;
};

namespace detail {

inline std::string stage_where(const StageSpec& s) { return "stage '" + s.name + "'"; }

inline void expect_inputs(const StageSpec& s, const std::vector<DatasetKind>& kinds, std::size_t min,
                          std::size_t max, std::initializer_list<DatasetKind> allowed) {
  if (kinds.size() < min || kinds.size() > max) {
    const std::string range = min == max ? std::to_string(min)
                              : max == static_cast<std::size_t>(-1) ? "at least " + std::to_string(min)
                                                                     : std::to_string(min) + ".." + std::to_string(max);
    throw Error(stage_where(s) + ": inputs: op '" + s.op + "' takes " + range + " input(s), got " +
                std::to_string(kinds.size()));
  }
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == kinds[i];
    if (!ok)
      throw Error(stage_where(s) + ": inputs: '" + s.inputs[i] + "' is a " + std::string(to_string(kinds[i])) +
                  " dataset, which op '" + s.op + "' does not accept there");
  }
}

inline void expect_kind(const StageSpec& s, const std::vector<DatasetKind>& kinds, std::size_t i, DatasetKind k) {
  if (kinds[i] != k)
    throw Error(stage_where(s) + ": inputs: '" + s.inputs[i] + "' must be a " + std::string(to_string(k)) +
                " dataset, found " + std::string(to_string(kinds[i])));
}

inline CleaningConfig cleaning_config(Params& p) {
  CleaningConfig c;
  c.max_tokens = p.integer("max_tokens", c.max_tokens, 1);
  c.max_consecutive_repeats = p.integer("max_consecutive_repeats", c.max_consecutive_repeats, 2);
  c.min_distinct_ratio = p.number("min_distinct_ratio", c.min_distinct_ratio, 1e-12, 1.0);
  c.distinct_ratio_min_tokens = p.integer("distinct_ratio_min_tokens", c.distinct_ratio_min_tokens, 1);
  c.drop_empty = p.boolean("drop_empty", c.drop_empty);
  return c;
}

inline AlignTrainConfig align_config(Params& p, unsigned threads) {
  AlignTrainConfig c;
  c.iterations = static_cast<int>(p.integer("iterations", 5, 1));
  c.p0 = p.number("p0", c.p0, 1e-12, 1.0 - 1e-12);
  c.tension = p.number("tension", c.tension, 1e-12);
  c.smoothing_floor = p.number("smoothing_floor", c.smoothing_floor, 1e-300, 1.0 - 1e-12);
  c.threads = threads;
  return c;
}

inline LineCommand line_command(Params& p, const std::string& key, unsigned threads) {
  LineCommand c;
  c.command = p.required_string(key);
  c.batch_size = p.integer("batch_size", 0);
  c.workers = static_cast<unsigned>(p.integer("workers", threads, 1));
  return c;
}

/// Relabels an unlabeled monolingual corpus, rejects a mismatching one.
inline MonoCorpus with_lang(MonoCorpus m, const LangCode& lang, const std::string& where) {
  if (m.lang == LangCode{}) m.lang = lang;
  else if (m.lang != lang) throw Error(where + ": monolingual input is '" + m.lang.str() + "', expected '" + lang.str() + "'");
  return m;
}

inline StageRunner configure_stage(const StageSpec& s, const std::vector<DatasetKind>& in,
                                   std::vector<DatasetKind>& out, const StageEnv& env,
                                   const std::filesystem::path& base_dir) {
  using K = DatasetKind;
  Params p(s.params, stage_where(s));
  const std::string where = stage_where(s);
  StageRunner run;
  const std::string op = s.op;

  if (op == "clean") {
    expect_inputs(s, in, 1, 1, {K::Parallel, K::Mono});
    auto cfg = cleaning_config(p);
    out = {in[0]};
    run = [cfg, name = s.name](const std::vector<const Dataset*>& d) {
      StageResult r;
      if (const auto* c = std::get_if<Corpus>(d[0])) {
        auto [cleaned, rep] = clean_corpus(*c, cfg);
        r.outputs.emplace_back(std::move(cleaned));
        r.report = std::move(rep);
      } else {
        auto [cleaned, rep] = clean_mono(std::get<MonoCorpus>(*d[0]), cfg);
        r.outputs.emplace_back(std::move(cleaned));
        r.report = std::move(rep);
      }
      return r;
    };
  } else if (op == "align-train") {
    expect_inputs(s, in, 1, 1, {K::Parallel});
    auto cfg = align_config(p, env.threads);
    const bool reverse = p.boolean("reverse", false);
    out = {K::Align};
    run = [cfg, reverse](const std::vector<const Dataset*>& d) {
      const auto& c = std::get<Corpus>(*d[0]);
      auto trained = train_alignment_traced(reverse ? swap_sides(c) : c, cfg);
      StageResult r;
      r.details["log_likelihood"] = trained.log_likelihood;
      r.outputs.emplace_back(std::move(trained.model));
      r.report.input = c.size();
      return r;
    };
  } else if (op == "align-filter") {
    expect_inputs(s, in, 1, 3, {K::Parallel, K::Align});
    if (in.size() == 2) throw Error(where + ": inputs: give the corpus alone or with both forward and reverse models");
    expect_kind(s, in, 0, K::Parallel);
    if (in.size() == 3) {
      expect_kind(s, in, 1, K::Align);
      expect_kind(s, in, 2, K::Align);
    }
    auto cfg = align_config(p, env.threads);
    AlignFilterPolicy policy = PercentilePolicy{};
    if (p.has("threshold") && p.has("percentile")) throw Error(where + ": params: give either percentile or threshold");
    if (p.has("threshold")) policy = AbsolutePolicy{p.number("threshold", 0.0)};
    else policy = PercentilePolicy{p.number("percentile", 10.0, 0.0, 99.999999)};
    p.number("percentile", 10.0);
    p.number("threshold", 0.0);
    out = {K::Parallel};
    run = [cfg, policy](const std::vector<const Dataset*>& d) {
      const auto& c = std::get<Corpus>(*d[0]);
      StageResult r;
      std::pair<Corpus, StageReport> res;
      if (d.size() == 3) {
        res = filter_by_alignment(c, std::get<AlignmentModel>(*d[1]), std::get<AlignmentModel>(*d[2]), policy);
      } else {
        auto fwd = train_alignment(c, cfg);
        auto rev = train_alignment(swap_sides(c), cfg);
        res = filter_by_alignment(c, fwd, rev, policy);
      }
      r.outputs.emplace_back(std::move(res.first));
      r.report = std::move(res.second);
      return r;
    };
  } else if (op == "denoise") {
    expect_inputs(s, in, 1, 1, {K::Parallel});
    DenoiseConfig cfg;
    cfg.threshold = p.number("threshold", cfg.threshold, -1.0, 1.0);
    const std::string scorer = p.string("scorer", "cmd");
    std::shared_ptr<SimilarityScorer> sc;
    if (scorer == "cmd") {
      sc = std::make_shared<ExternalScorer>(line_command(p, "command", env.threads));
    } else if (scorer == "files") {
      const auto resolve = [&](const std::string& x) {
        std::filesystem::path path(x);
        return path.is_absolute() ? path : base_dir / path;
      };
      const auto src = resolve(p.required_string("source_embeddings"));
      const auto tgt = resolve(p.required_string("target_embeddings"));
      sc = std::make_shared<EmbeddingFileScorer>(EmbeddingFileScorer::from_files(src, tgt));
    } else {
      p.fail("scorer", "expected 'cmd' or 'files'");
    }
    out = {K::Parallel};
    run = [cfg, sc](const std::vector<const Dataset*>& d) {
      auto scored = score_corpus(std::get<Corpus>(*d[0]), *sc);
      auto [kept, rep] = filter_by_similarity(scored, cfg);
      StageResult r;
      r.outputs.emplace_back(std::move(kept));
      r.report = std::move(rep);
      return r;
    };
  } else if (op == "bpe-train") {
    expect_inputs(s, in, 1, static_cast<std::size_t>(-1), {K::Parallel, K::Mono});
    const auto vocab = static_cast<std::size_t>(p.integer("vocab_size", 32000, 1));
    out = {K::Bpe};
    run = [vocab](const std::vector<const Dataset*>& d) {
      std::vector<MonoCorpus> sides;
      std::size_t n = 0;
      for (const auto* x : d) {
        if (const auto* c = std::get_if<Corpus>(x)) {
          sides.push_back(source_side(*c));
          sides.push_back(target_side(*c));
          n += c->size();
        } else {
          sides.push_back(std::get<MonoCorpus>(*x));
          n += sides.back().size();
        }
      }
      StageResult r;
      auto model = train_bpe(sides, vocab);
      r.details["merges"] = model.merges.size();
      r.outputs.emplace_back(std::move(model));
      r.report.input = n;
      return r;
    };
  } else if (op == "bpe-encode" || op == "bpe-decode") {
    expect_inputs(s, in, 2, 2, {K::Parallel, K::Bpe});
    expect_kind(s, in, 0, K::Parallel);
    expect_kind(s, in, 1, K::Bpe);
    const bool enc = op == "bpe-encode";
    out = {K::Parallel};
    run = [enc](const std::vector<const Dataset*>& d) {
      const auto& c = std::get<Corpus>(*d[0]);
      const auto& m = std::get<BpeModel>(*d[1]);
      StageResult r;
      r.outputs.emplace_back(enc ? encode_corpus(m, c) : decode_corpus(m, c));
      return r;
    };
  } else if (op == "ratios" || op == "upsample") {
    expect_inputs(s, in, 1, static_cast<std::size_t>(-1), {K::Parallel});
    const double t = p.number("temperature", 2.0, 1.0);
    const bool up = op == "upsample";
    out.assign(up ? in.size() : 0, K::Parallel);
    const std::uint64_t seed = p.integer("seed", env.seed);
    run = [t, up, seed](const std::vector<const Dataset*>& d) {
      std::vector<LangCode> langs;
      std::vector<std::uint64_t> sizes;
      for (const auto* x : d) {
        const auto& c = std::get<Corpus>(*x);
        if (std::find(langs.begin(), langs.end(), c.pair.target) != langs.end())
          throw Error("two inputs share the target language '" + c.pair.target.str() + "'");
        langs.push_back(c.pair.target);
        sizes.push_back(c.size());
      }
      auto plan = SamplingPlan::make(langs, sizes, t, seed);
      StageResult r;
      json table = json::array();
      for (std::size_t i = 0; i < langs.size(); ++i)
        table.push_back({{"lang", langs[i].str()}, {"size", sizes[i]}, {"ratio", plan.ratios[i]}});
      r.details["ratios"] = table;
      if (up)
        for (std::size_t i = 0; i < d.size(); ++i)
          r.outputs.emplace_back(upsample_corpus(std::get<Corpus>(*d[i]), plan.ratios[i], seed, langs[i].str()));
      return r;
    };
  } else if (op == "tag") {
    expect_inputs(s, in, 1, 1, {K::Parallel});
    const std::string lang = p.string("lang", "");
    const std::string tag = p.string("tag", "");
    if (!lang.empty() && !LangCode::valid(lang)) p.fail("lang", "invalid language code");
    out = {K::Parallel};
    run = [lang, tag](const std::vector<const Dataset*>& d) {
      const auto& c = std::get<Corpus>(*d[0]);
      LangCode l = lang.empty() ? c.pair.target : LangCode(lang);
      TagScheme scheme = TagScheme::for_languages({l});
      if (!tag.empty()) scheme.tags[l] = tag;
      StageResult r;
      r.outputs.emplace_back(tag_language(c, scheme, l));
      return r;
    };
  } else if (op == "mix") {
    expect_inputs(s, in, 1, static_cast<std::size_t>(-1), {K::Parallel});
    const std::uint64_t seed = p.integer("seed", env.seed);
    out = {K::Parallel};
    run = [seed](const std::vector<const Dataset*>& d) {
      std::vector<Corpus> cs;
      for (const auto* x : d) cs.push_back(std::get<Corpus>(*x));
      StageResult r;
      r.outputs.emplace_back(mix_shuffle(cs, seed));
      return r;
    };
  } else if (op == "mix-train") {
    expect_inputs(s, in, 3, 3, {K::Parallel});
    auto w = p.numbers("weights", {1.0, 1.0, 1.0});
    if (w.size() != 3) p.fail("weights", "expected [authentic, forward, back]");
    MixSpec spec{w[0], w[1], w[2], p.integer("seed", env.seed)};
    try {
      spec.validate();
    } catch (const Error& e) {
      p.fail("weights", e.what());
    }
    out = {K::Parallel};
    run = [spec](const std::vector<const Dataset*>& d) {
      StageResult r;
      r.outputs.emplace_back(
          mix_training_set(std::get<Corpus>(*d[0]), std::get<Corpus>(*d[1]), std::get<Corpus>(*d[2]), spec));
      return r;
    };
  } else if (op == "ft" || op == "bt") {
    expect_inputs(s, in, 1, 1, {K::Mono});
    const bool forward = op == "ft";
    const LanguagePair pair = parse_language_pair(p.required_string("pair"));
    auto cmd = line_command(p, forward ? "teacher_cmd" : "reverse_cmd", env.threads);
    const auto k = p.optional_integer("sample", 1);
    const std::uint64_t seed = p.integer("seed", env.seed);
    out = {K::Parallel};
    run = [forward, pair, cmd, k, seed, where](const std::vector<const Dataset*>& d) {
      const LangCode from = forward ? pair.source : pair.target;
      MonoCorpus mono = with_lang(std::get<MonoCorpus>(*d[0]), from, where);
      StageResult r;
      r.report.input = mono.size();
      if (k) {
        mono = sample_monolingual(mono, std::min<std::size_t>(*k, mono.size()), seed);
        r.details["sampled"] = mono.size();
      }
      Translator t{forward ? pair : LanguagePair{pair.target, pair.source}, cmd};
      r.outputs.emplace_back(forward ? forward_translate(mono, t) : back_translate(mono, t));
      return r;
    };
  } else if (op == "tel-assemble") {
    expect_inputs(s, in, 1, static_cast<std::size_t>(-1), {K::Mono});
    const LanguagePair pair = parse_language_pair(p.required_string("pair"));
    out = {K::Parallel};
    run = [pair](const std::vector<const Dataset*>& d) {
      std::vector<MonoCorpus> hyps;
      for (std::size_t i = 1; i < d.size(); ++i) hyps.push_back(std::get<MonoCorpus>(*d[i]));
      const auto& dev = std::get<MonoCorpus>(*d[0]);
      StageResult r;
      r.outputs.emplace_back(assemble_transductive_set(dev, hyps, pair));
      r.report.input = dev.size() * hyps.size();
      r.report.removed.emplace_back("duplicate", r.report.input - item_count(r.outputs[0]));
      return r;
    };
  } else {
    throw Error(where + ": op: unknown op '" + op + "'");
  }
  p.finish();
  if (s.outputs.size() != out.size())
    throw Error(where + ": outputs: op '" + op + "' produces " + std::to_string(out.size()) + " output(s), " +
                std::to_string(s.outputs.size()) + " declared");
  return run;
}

}  // namespace detail

/// Per-stage seed: the manifest seed mixed with the stage name.
inline std::uint64_t stage_seed(std::uint64_t global, const std::string& stage) {
  return splitmix64(global ^ fnv1a64(stage));
}

struct ValidationResult {
  std::vector<Diagnostic> diagnostics;
  std::vector<std::size_t> order;  // execution order (indices into stages)
  bool ok() const { return diagnostics.empty(); }
};

namespace detail {

inline ValidationResult validate(const PipelineManifest& m) {
  ValidationResult v;
  auto& diags = v.diagnostics;
  const auto add = [&](std::string where, std::string msg) { diags.push_back({std::move(where), std::move(msg)}); };

  if (!m.seed) add("global.seed required", "");

  for (const auto& [name, in] : m.inputs) {
    const std::string where = "inputs." + name;
    const std::size_t want = in.kind == DatasetKind::Parallel && in.format == CorpusFormat::TwoFile ? 2 : 1;
    if (in.kind != DatasetKind::Parallel && in.format == CorpusFormat::TwoFile)
      add(where + ".format", "two-file applies only to parallel inputs");
    if (in.paths.size() != want) add(where + ".path", "expected " + std::to_string(want) + " path(s)");
    for (const auto& p : in.paths)
      if (!std::filesystem::exists(p)) add(where + ".path", "file not found: " + p.string());
  }

  // producers and name checks
  std::map<std::string, std::size_t> producer;
  std::set<std::string> stage_names;
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    const auto& s = m.stages[i];
    const std::string where = s.name.empty() ? "stages[" + std::to_string(i) + "]" : stage_where(s);
    if (s.name.empty()) add(where + ".name", "required");
    else if (!stage_names.insert(s.name).second) add(where + ".name", "duplicate stage name");
    for (const auto& o : s.outputs) {
      if (m.inputs.count(o)) add(where + ".outputs", "'" + o + "' is already a declared input");
      else if (!producer.emplace(o, i).second) add(where + ".outputs", "'" + o + "' is produced by more than one stage");
    }
  }
  for (std::size_t i = 0; i < m.stages.size(); ++i) {
    const auto& s = m.stages[i];
    for (const auto& in : s.inputs)
      if (!m.inputs.count(in) && !producer.count(in))
        add(stage_where(s) + ".inputs", "'" + in + "' is neither a declared input nor a stage output");
  }

  // Kahn's algorithm; ties follow manifest order
  const std::size_t n = m.stages.size();
  std::vector<std::set<std::size_t>> deps(n);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& in : m.stages[i].inputs)
      if (auto it = producer.find(in); it != producer.end()) deps[i].insert(it->second);
  std::vector<bool> done(n, false);
  while (v.order.size() < n) {
    bool progressed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (done[i]) continue;
      bool ready = true;
      for (auto d : deps[i]) ready = ready && done[d];
      if (ready) {
        done[i] = true;
        v.order.push_back(i);
        progressed = true;
        break;
      }
    }
    if (!progressed) {
      std::string names;
      for (std::size_t i = 0; i < n; ++i)
        if (!done[i]) names += (names.empty() ? "" : ", ") + m.stages[i].name;
      add("stages", "stage graph contains a cycle among: " + names);
      break;
    }
  }

  // kinds and params, in dependency order
  std::map<std::string, std::optional<DatasetKind>> kinds;
  for (const auto& [name, in] : m.inputs) kinds[name] = in.kind;
  for (auto i : v.order) {
    const auto& s = m.stages[i];
    std::vector<DatasetKind> in_kinds;
    bool known = true;
    for (const auto& in : s.inputs) {
      auto it = kinds.find(in);
      if (it == kinds.end() || !it->second) known = false;
      else in_kinds.push_back(*it->second);
    }
    std::vector<DatasetKind> out_kinds;
    bool ok = false;
    if (known) {
      try {
        configure_stage(s, in_kinds, out_kinds, StageEnv{}, m.base_dir);
        ok = true;
      } catch (const Error& e) {
        const std::string msg = e.what();
        const auto colon = msg.find(": ");
        if (colon != std::string::npos) add(msg.substr(0, colon), msg.substr(colon + 2));
        else add(stage_where(s), msg);
      }
    }
    for (std::size_t k = 0; k < s.outputs.size(); ++k)
      kinds[s.outputs[k]] = ok && k < out_kinds.size() ? std::optional<DatasetKind>(out_kinds[k]) : std::nullopt;
  }
  return v;
}

}  // namespace detail

/// Empty iff the manifest is runnable.
inline std::vector<Diagnostic> validate_manifest(const PipelineManifest& m) { return detail::validate(m).diagnostics; }

struct DatasetRecord {
  std::string name;
  std::size_t count = 0;
  std::string digest;  // sha256 of the written file
  std::filesystem::path path;
};

struct StageRecord {
  std::string name;
  std::string op;
  std::vector<std::pair<std::string, std::size_t>> inputs;  // dataset, item count
  std::vector<DatasetRecord> outputs;
  std::vector<std::pair<std::string, std::size_t>> removed;
  double wall_seconds = 0.0;
  json details = json::object();
};

struct RunReport {
  std::uint64_t seed = 0;
  std::vector<StageRecord> stages;

  const StageRecord* stage(const std::string& name) const {
    for (const auto& s : stages)
      if (s.name == name) return &s;
    return nullptr;
  }
};

inline json to_json(const RunReport& r) {
  json j;
  j["seed"] = r.seed;
  j["stages"] = json::array();
  for (const auto& s : r.stages) {
    json st;
    st["name"] = s.name;
    st["op"] = s.op;
    st["inputs"] = json::array();
    for (const auto& [d, n] : s.inputs) st["inputs"].push_back({{"dataset", d}, {"count", n}});
    st["outputs"] = json::array();
    for (const auto& o : s.outputs)
      st["outputs"].push_back({{"dataset", o.name}, {"count", o.count}, {"sha256", o.digest}, {"path", o.path.string()}});
    st["removed"] = json::object();
    for (const auto& [rule, n] : s.removed) st["removed"][rule] = n;
    st["wall_seconds"] = s.wall_seconds;
    st["details"] = s.details;
    j["stages"].push_back(std::move(st));
  }
  return j;
}

/// Table-shaped summary: one row per stage with counts in and out.
inline void print_run_report(std::ostream& os, const RunReport& r) {
  os << "seed " << r.seed << "\n";
  os << std::left << std::setw(20) << "stage" << std::setw(14) << "op" << std::right << std::setw(10) << "in"
     << std::setw(10) << "out" << "  removed\n";
  for (const auto& s : r.stages) {
    std::size_t in = 0, out = 0;
    for (const auto& i : s.inputs) in += i.second;
    for (const auto& o : s.outputs) out += o.count;
    os << std::left << std::setw(20) << s.name << std::setw(14) << s.op << std::right << std::setw(10) << in
       << std::setw(10) << out << "  ";
    bool first = true;
    for (const auto& [rule, n] : s.removed) {
      os << (first ? "" : ", ") << rule << "=" << n;
      first = false;
    }
    if (s.details.contains("ratios"))
      for (const auto& row : s.details["ratios"])
        os << (first ? "" : ", ") << "lambda[" << row["lang"].get<std::string>() << "]="
           << format_fixed(row["ratio"].get<double>(), 4), first = false;
    os << "\n";
  }
  for (const auto& s : r.stages)
    for (const auto& o : s.outputs) os << "  " << o.name << " sha256:" << o.digest << "\n";
}

/// Raised when a stage fails; carries the stage name.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

class ValidationFailure : public Error {
 public:
  explicit ValidationFailure(std::vector<Diagnostic> d) : Error(summary(d)), diagnostics_(std::move(d)) {}
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  static std::string summary(const std::vector<Diagnostic>& d) {
    std::string s = "manifest is invalid:";
    for (const auto& x : d) s += "\n  " + x.str();
    return s;
  }
  std::vector<Diagnostic> diagnostics_;
};

inline std::filesystem::path output_path(const PipelineManifest& m, const std::string& dataset, DatasetKind k) {
  return m.work_dir / (dataset + std::string(file_extension(k)));
}

inline Dataset load_input(const InputSpec& in) {
  switch (in.kind) {
    case DatasetKind::Parallel: {
      Corpus c = read_parallel(in.paths, in.format);
      if (in.pair) c.pair = *in.pair;
      return c;
    }
    case DatasetKind::Mono: return read_mono(in.paths.at(0), in.lang.value_or(LangCode{}));
    case DatasetKind::Bpe: return read_bpe_model(in.paths.at(0));
    case DatasetKind::Align: return read_alignment_model(in.paths.at(0));
  }
  throw Error("unreachable");
}

/// Validates, then runs every stage in dependency order. Each output is
/// written through a temp file and a rename. On failure the outputs of the
/// failing stage and of every stage after it are removed, earlier ones stay.
inline RunReport run_manifest(const PipelineManifest& m) {
  auto v = detail::validate(m);
  if (!v.ok()) throw ValidationFailure(std::move(v.diagnostics));

  RunReport report;
  report.seed = *m.seed;
  std::map<std::string, Dataset> data;
  std::filesystem::create_directories(m.work_dir);

  const auto remove_from = [&](std::size_t pos) {
    for (std::size_t k = pos; k < v.order.size(); ++k)
      for (const auto& o : m.stages[v.order[k]].outputs)
        for (auto kind : {DatasetKind::Parallel, DatasetKind::Mono, DatasetKind::Bpe, DatasetKind::Align}) {
          std::error_code ec;
          auto path = output_path(m, o, kind);
          std::filesystem::remove(path, ec);
          path += ".tmp";
          std::filesystem::remove(path, ec);
        }
  };

  for (std::size_t pos = 0; pos < v.order.size(); ++pos) {
    const auto& s = m.stages[v.order[pos]];
    StageRecord rec;
    rec.name = s.name;
    rec.op = s.op;
    const auto start = std::chrono::steady_clock::now();
    try {
      std::vector<const Dataset*> inputs;
      std::vector<DatasetKind> kinds;
      for (const auto& name : s.inputs) {
        auto it = data.find(name);
        if (it == data.end()) it = data.emplace(name, load_input(m.inputs.at(name))).first;
        inputs.push_back(&it->second);
        kinds.push_back(kind_of(it->second));
        rec.inputs.emplace_back(name, item_count(it->second));
      }
      std::vector<DatasetKind> out_kinds;
      auto runner = detail::configure_stage(s, kinds, out_kinds, StageEnv{stage_seed(*m.seed, s.name), m.threads},
                                            m.base_dir);
      auto result = runner(inputs);
      rec.removed = result.report.removed;
      rec.details = result.details;
      for (std::size_t k = 0; k < result.outputs.size(); ++k) {
        auto& ds = result.outputs[k];
        const auto text = serialize(ds);
        const auto path = output_path(m, s.outputs[k], kind_of(ds));
        detail::write_file_atomic(path, text);
        rec.outputs.push_back({s.outputs[k], item_count(ds), sha256_hex(text), path});
        data.insert_or_assign(s.outputs[k], std::move(ds));
      }
    } catch (const std::exception& e) {
      remove_from(pos);
      throw StageFailure(s.name, e.what());
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.stages.push_back(std::move(rec));
  }

  std::ostringstream text;
  print_run_report(text, report);
  detail::write_file_atomic(m.work_dir / "run_report.txt", text.str());
  detail::write_file_atomic(m.work_dir / "run_report.json", to_json(report).dump(2) + "\n");
  return report;
}

}  // namespace lowres

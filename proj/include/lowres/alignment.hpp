#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"
#include "lowres/report.hpp"
#include "lowres/text.hpp"

namespace lowres {

struct AlignTrainConfig {
  int iterations = 5;
  double p0 = 0.08;
  double tension = 4.0;
  double smoothing_floor = 1e-9;
  // Worker threads for the E-step. Results do not depend on this value.
  unsigned threads = 1;

  void validate() const {
    if (iterations < 1) throw Error("align: iterations must be >= 1");
    if (!(p0 > 0.0 && p0 < 1.0)) throw Error("align: p0 must be in (0, 1)");
    if (!(tension > 0.0)) throw Error("align: tension must be positive");
    if (!(smoothing_floor > 0.0 && smoothing_floor < 1.0))
      throw Error("align: smoothing_floor must be in (0, 1)");
  }
};

/// Lexical table t(f | e) plus the diagonal prior parameters. The empty string
/// is the NULL source word; real tokens are never empty.
class AlignmentModel {
 public:
  using Row = std::unordered_map<std::string, double>;
  using Table = std::unordered_map<std::string, Row>;

  static inline const std::string kNull{};

  LanguagePair direction;
  double p0 = 0.08;
  double tension = 4.0;
  double smoothing_floor = 1e-9;
  Table ttable;

  /// t(f | e), or the smoothing floor when the pair was never seen.
  double prob(const std::string& e, const std::string& f) const {
    auto row = ttable.find(e);
    if (row == ttable.end()) return smoothing_floor;
    auto it = row->second.find(f);
    if (it == row->second.end() || it->second <= 0.0) return smoothing_floor;
    return std::max(it->second, smoothing_floor);
  }
};

namespace detail {

/// Fills `out[0]` with the NULL prior and `out[1..n]` with the diagonal
/// prior for target position i (1-based) of m against a source of length n.
inline void diagonal_prior(std::size_t i, std::size_t m, std::size_t n, double p0, double tension,
                           std::vector<double>& out) {
  out.assign(n + 1, 0.0);
  out[0] = p0;
  const double ti = static_cast<double>(i) / static_cast<double>(m);
  double z = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    out[j] = std::exp(-tension * std::abs(ti - static_cast<double>(j) / static_cast<double>(n)));
    z += out[j];
  }
  for (std::size_t j = 1; j <= n; ++j) out[j] = (1.0 - p0) * out[j] / z;
}

struct IdPair {
  std::vector<std::uint32_t> src;  // ids into the source vocabulary, 0 is NULL
  std::vector<std::uint32_t> tgt;
};

inline std::uint64_t pack(std::uint32_t e, std::uint32_t f) {
  return (static_cast<std::uint64_t>(e) << 32) | f;
}

struct ShardCounts {
  std::unordered_map<std::uint64_t, double> counts;
  double log_likelihood = 0.0;
};

inline constexpr std::size_t kAlignShardSize = 256;

}  // namespace detail

struct AlignmentTraining {
  AlignmentModel model;
  /// Corpus log-likelihood before the first update and after each iteration
  /// (iterations + 1 entries).
  std::vector<double> log_likelihood;
};

/// EM training of the diagonal-prior IBM Model 2 with a NULL word. Tension is
/// held fixed. The E-step is sharded in fixed blocks of pairs and the counts
/// are reduced in shard order, so any thread count gives identical tables.
inline AlignmentTraining train_alignment_traced(const Corpus& corpus, const AlignTrainConfig& cfg = {}) {
  cfg.validate();
  if (corpus.empty()) throw Error("align: cannot train on an empty corpus");

  std::unordered_map<std::string, std::uint32_t> src_ids{{AlignmentModel::kNull, 0}};
  std::unordered_map<std::string, std::uint32_t> tgt_ids;
  std::vector<std::string> src_words{AlignmentModel::kNull};
  std::vector<std::string> tgt_words;
  std::vector<detail::IdPair> data;
  data.reserve(corpus.size());
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& p = corpus.items[k];
    auto s = split_tokens(p.source);
    auto t = split_tokens(p.target);
    if (s.empty() || t.empty())
      throw Error("align: pair " + std::to_string(k) + " has a side with zero tokens");
    detail::IdPair ids;
    for (auto w : s) {
      auto [it, fresh] = src_ids.try_emplace(std::string(w), static_cast<std::uint32_t>(src_words.size()));
      if (fresh) src_words.emplace_back(w);
      ids.src.push_back(it->second);
    }
    for (auto w : t) {
      auto [it, fresh] = tgt_ids.try_emplace(std::string(w), static_cast<std::uint32_t>(tgt_words.size()));
      if (fresh) tgt_words.emplace_back(w);
      ids.tgt.push_back(it->second);
    }
    data.push_back(std::move(ids));
  }

  // Uniform start over the target vocabulary; only co-occurring entries are
  // ever read.
  const double uniform = 1.0 / static_cast<double>(tgt_words.size());
  std::unordered_map<std::uint64_t, double> ttable;
  for (const auto& d : data)
    for (auto f : d.tgt) {
      ttable.emplace(detail::pack(0, f), uniform);
      for (auto e : d.src) ttable.emplace(detail::pack(e, f), uniform);
    }

  const std::size_t shards = (data.size() + detail::kAlignShardSize - 1) / detail::kAlignShardSize;

  const auto e_step = [&](bool collect) {
    std::vector<detail::ShardCounts> results(shards);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
      std::vector<double> prior;
      std::vector<double> post;
      for (std::size_t s = next++; s < shards; s = next++) {
        auto& out = results[s];
        const std::size_t lo = s * detail::kAlignShardSize;
        const std::size_t hi = std::min(data.size(), lo + detail::kAlignShardSize);
        for (std::size_t k = lo; k < hi; ++k) {
          const auto& d = data[k];
          const std::size_t n = d.src.size();
          const std::size_t m = d.tgt.size();
          for (std::size_t i = 0; i < m; ++i) {
            detail::diagonal_prior(i + 1, m, n, cfg.p0, cfg.tension, prior);
            const auto f = d.tgt[i];
            post.assign(n + 1, 0.0);
            post[0] = prior[0] * ttable.at(detail::pack(0, f));
            double z = post[0];
            for (std::size_t j = 1; j <= n; ++j) {
              post[j] = prior[j] * ttable.at(detail::pack(d.src[j - 1], f));
              z += post[j];
            }
            out.log_likelihood += std::log(z);
            if (!collect) continue;
            out.counts[detail::pack(0, f)] += post[0] / z;
            for (std::size_t j = 1; j <= n; ++j) out.counts[detail::pack(d.src[j - 1], f)] += post[j] / z;
          }
        }
      }
    };
    const unsigned nthreads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, cfg.threads), shards));
    if (nthreads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
      for (auto& th : pool) th.join();
    }
    return results;
  };

  AlignmentTraining result;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto results = e_step(true);
    double ll = 0.0;
    std::unordered_map<std::uint64_t, double> counts;
    counts.reserve(ttable.size());
    for (auto& r : results) {
      ll += r.log_likelihood;
      for (const auto& [key, c] : r.counts) counts[key] += c;
    }
    result.log_likelihood.push_back(ll);

    std::vector<double> row_total(src_words.size(), 0.0);
    // sum in a fixed key order so the normalizers are reproducible
    std::vector<std::uint64_t> keys;
    keys.reserve(counts.size());
    for (const auto& kv : counts) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    for (auto key : keys) row_total[key >> 32] += counts[key];
    for (auto key : keys) ttable[key] = counts[key] / row_total[key >> 32];
  }
  {
    auto results = e_step(false);
    double ll = 0.0;
    for (auto& r : results) ll += r.log_likelihood;
    result.log_likelihood.push_back(ll);
  }

  auto& model = result.model;
  model.direction = corpus.pair;
  model.p0 = cfg.p0;
  model.tension = cfg.tension;
  model.smoothing_floor = cfg.smoothing_floor;
  for (const auto& [key, prob] : ttable)
    model.ttable[src_words[key >> 32]][tgt_words[key & 0xFFFFFFFFu]] = prob;
  return result;
}

inline AlignmentModel train_alignment(const Corpus& corpus, const AlignTrainConfig& cfg = {}) {
  return train_alignment_traced(corpus, cfg).model;
}

inline Corpus swap_sides(const Corpus& corpus) {
  Corpus out{LanguagePair{corpus.pair.target, corpus.pair.source}, {}};
  out.items.reserve(corpus.size());
  for (const auto& p : corpus.items) {
    SentencePair q = p;
    std::swap(q.source, q.target);
    out.items.push_back(std::move(q));
  }
  return out;
}

/// Mean per-target-token log-probability (nats) of `target` given `source`.
inline double score_pair(const AlignmentModel& model, std::string_view source, std::string_view target) {
  const auto src = split_tokens(source);
  const auto tgt = split_tokens(target);
  if (src.empty() || tgt.empty()) throw Error("align: cannot score a pair with an empty side");
  std::vector<std::string> e(src.begin(), src.end());
  std::vector<double> prior;
  double total = 0.0;
  const std::size_t n = e.size();
  const std::size_t m = tgt.size();
  for (std::size_t i = 0; i < m; ++i) {
    detail::diagonal_prior(i + 1, m, n, model.p0, model.tension, prior);
    const std::string f(tgt[i]);
    double z = prior[0] * model.prob(AlignmentModel::kNull, f);
    for (std::size_t j = 1; j <= n; ++j) z += prior[j] * model.prob(e[j - 1], f);
    total += std::log(z);
  }
  return total / static_cast<double>(m);
}

inline double score_pair(const AlignmentModel& model, const SentencePair& pair) {
  return score_pair(model, pair.source, pair.target);
}

/// Corpus log-likelihood (sum over target tokens) with smoothing for unseen
/// pairs.
inline double corpus_log_likelihood(const AlignmentModel& model, const Corpus& corpus) {
  double ll = 0.0;
  for (const auto& p : corpus.items) ll += score_pair(model, p) * static_cast<double>(count_tokens(p.target));
  return ll;
}

struct PercentilePolicy {
  double percent = 10.0;
};
struct AbsolutePolicy {
  double threshold = 0.0;
};
using AlignFilterPolicy = std::variant<PercentilePolicy, AbsolutePolicy>;

/// Scores every pair with both directional models (mean of the two), stores
/// the result in align_score and drops the poorly aligned ones. Percentile
/// mode drops floor(p * N / 100) pairs with the lowest scores; among equal
/// scores the later pair is dropped first.
inline std::pair<Corpus, StageReport> filter_by_alignment(const Corpus& corpus, const AlignmentModel& fwd,
                                                          const AlignmentModel& rev,
                                                          AlignFilterPolicy policy = PercentilePolicy{}) {
  if (const auto* pp = std::get_if<PercentilePolicy>(&policy)) {
    if (!(pp->percent >= 0.0 && pp->percent < 100.0))
      throw Error("align-filter: percentile must be in [0, 100), got " + format_double(pp->percent));
  }
  const LanguagePair reversed{corpus.pair.target, corpus.pair.source};
  if (fwd.direction != corpus.pair)
    throw Error("align-filter: forward model direction " + fwd.direction.source.str() + "-" +
                fwd.direction.target.str() + " does not match corpus " + corpus.pair.source.str() + "-" +
                corpus.pair.target.str());
  if (rev.direction != reversed)
    throw Error("align-filter: reverse model direction " + rev.direction.source.str() + "-" +
                rev.direction.target.str() + " does not match " + reversed.source.str() + "-" +
                reversed.target.str());

  Corpus scored = corpus;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    auto& p = scored.items[k];
    try {
      p.align_score = 0.5 * (score_pair(fwd, p.source, p.target) + score_pair(rev, p.target, p.source));
    } catch (const Error& e) {
      throw Error("align-filter: pair " + std::to_string(k) + ": " + e.what());
    }
  }

  std::vector<bool> drop(scored.size(), false);
  if (const auto* pp = std::get_if<PercentilePolicy>(&policy)) {
    const auto k = static_cast<std::size_t>(
        std::floor(pp->percent * static_cast<double>(scored.size()) / 100.0));
    std::vector<std::size_t> order(scored.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double sa = *scored.items[a].align_score;
      const double sb = *scored.items[b].align_score;
      if (sa != sb) return sa < sb;
      return a > b;
    });
    for (std::size_t i = 0; i < k; ++i) drop[order[i]] = true;
  } else {
    const double t = std::get<AbsolutePolicy>(policy).threshold;
    for (std::size_t i = 0; i < scored.size(); ++i) drop[i] = *scored.items[i].align_score < t;
  }

  Corpus out = corpus.like();
  for (std::size_t i = 0; i < scored.size(); ++i)
    if (!drop[i]) out.items.push_back(std::move(scored.items[i]));
  StageReport report{"align-filter", corpus.size(), out.size(), {{"alignment", corpus.size() - out.size()}}};
  return {std::move(out), std::move(report)};
}

// ---------------------------------------------------------------------------
// Model file: a versioned text table.
//
//   #align-model-v1
//   direction <src> <tgt>
//   p0 <real>
//   tension <real>
//   floor <real>
//   N <f> <prob>        NULL-word rows
//   T <e> <f> <prob>    lexical rows
//
// Fields are TAB-separated, rows sorted bytewise, reals in shortest
// round-trip form.

inline constexpr std::string_view kAlignModelHeader = "#align-model-v1";

inline std::string format_alignment_model(const AlignmentModel& m) {
  std::string out;
  out += kAlignModelHeader;
  out += '\n';
  out += "direction\t" + m.direction.source.str() + '\t' + m.direction.target.str() + '\n';
  out += "p0\t" + format_double(m.p0) + '\n';
  out += "tension\t" + format_double(m.tension) + '\n';
  out += "floor\t" + format_double(m.smoothing_floor) + '\n';
  std::vector<std::string> es;
  for (const auto& kv : m.ttable) es.push_back(kv.first);
  std::sort(es.begin(), es.end());
  for (const auto& e : es) {
    const auto& row = m.ttable.at(e);
    std::vector<std::pair<std::string, double>> entries(row.begin(), row.end());
    std::sort(entries.begin(), entries.end());
    for (const auto& [f, p] : entries) {
      if (e.empty()) out += "N\t" + f;
      else out += "T\t" + e + '\t' + f;
      out += '\t' + format_double(p) + '\n';
    }
  }
  return out;
}

inline AlignmentModel parse_alignment_model(const std::string& data) {
  auto lines = detail::split_lines(data);
  if (lines.empty() || lines[0] != kAlignModelHeader) throw Error("align model: missing '#align-model-v1' header");
  AlignmentModel m;
  bool have_direction = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto where = "align model line " + std::to_string(i + 1) + ": ";
    auto f = split_on(lines[i], '\t');
    const auto num = [&](const std::string& s) {
      auto v = parse_double(s);
      if (!v || !std::isfinite(*v)) throw Error(where + "invalid number '" + s + "'");
      return *v;
    };
    if (f[0] == "direction" && f.size() == 3) {
      m.direction = LanguagePair{LangCode(f[1]), LangCode(f[2])};
      have_direction = true;
    } else if (f[0] == "p0" && f.size() == 2) {
      m.p0 = num(f[1]);
    } else if (f[0] == "tension" && f.size() == 2) {
      m.tension = num(f[1]);
    } else if (f[0] == "floor" && f.size() == 2) {
      m.smoothing_floor = num(f[1]);
    } else if (f[0] == "N" && f.size() == 3) {
      m.ttable[AlignmentModel::kNull][f[1]] = num(f[2]);
    } else if (f[0] == "T" && f.size() == 4) {
      if (f[1].empty()) throw Error(where + "empty source token");
      m.ttable[f[1]][f[2]] = num(f[3]);
    } else {
      throw Error(where + "unrecognized record");
    }
  }
  if (!have_direction) throw Error("align model: missing direction record");
  return m;
}

inline void write_alignment_model(const AlignmentModel& m, const std::filesystem::path& path) {
  detail::write_file_atomic(path, format_alignment_model(m));
}

inline AlignmentModel read_alignment_model(const std::filesystem::path& path) {
  return parse_alignment_model(detail::read_file(path));
}

}  // namespace lowres

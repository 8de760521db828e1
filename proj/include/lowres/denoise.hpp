#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"
#include "lowres/process.hpp"
#include "lowres/report.hpp"
#include "lowres/text.hpp"

namespace lowres {

/// a.b / (|a||b|), clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw Error("cosine: vectors must have at least one dimension");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

/// Produces one similarity score per pair, in corpus order.
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  virtual std::vector<double> score(const Corpus& corpus) const = 0;
};

using Embeddings = std::vector<std::vector<double>>;

/// One vector per line, whitespace-separated decimal reals.
inline Embeddings parse_embeddings(const std::string& data, std::string_view name = "embeddings") {
  Embeddings out;
  auto lines = detail::split_lines(data);
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<double> v;
    for (auto tok : split_tokens(lines[i])) {
      auto x = parse_double(tok);
      if (!x || !std::isfinite(*x))
        throw Error(std::string(name) + " line " + std::to_string(i + 1) + ": invalid number '" + std::string(tok) + "'");
      v.push_back(*x);
    }
    out.push_back(std::move(v));
  }
  return out;
}

inline Embeddings read_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(detail::read_file(path), path.string());
}

/// Cosine similarity between precomputed source and target embeddings.
class EmbeddingFileScorer : public SimilarityScorer {
 public:
  EmbeddingFileScorer(Embeddings source, Embeddings target)
      : source_(std::move(source)), target_(std::move(target)) {}

  static EmbeddingFileScorer from_files(const std::filesystem::path& src, const std::filesystem::path& tgt) {
    return EmbeddingFileScorer(read_embeddings(src), read_embeddings(tgt));
  }

  std::vector<double> score(const Corpus& corpus) const override {
    if (source_.size() != corpus.size() || target_.size() != corpus.size())
      throw Error("denoise: embedding line count mismatch: corpus has " + std::to_string(corpus.size()) +
                  " pairs, source embeddings " + std::to_string(source_.size()) + ", target embeddings " +
                  std::to_string(target_.size()));
    std::vector<double> out;
    out.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      try {
        out.push_back(cosine_similarity(source_[i], target_[i]));
      } catch (const Error& e) {
        throw Error("denoise: embedding line " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    return out;
  }

 private:
  Embeddings source_;
  Embeddings target_;
};

/// External command: TSV pairs on stdin, one decimal score per line on
/// stdout, exit status 0.
class ExternalScorer : public SimilarityScorer {
 public:
  explicit ExternalScorer(LineCommand cmd) : cmd_(std::move(cmd)) {}

  std::vector<double> score(const Corpus& corpus) const override {
    std::vector<std::string> rows;
    rows.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const auto& p = corpus.items[i];
      if (p.source.find('\t') != std::string::npos || p.target.find('\t') != std::string::npos)
        throw Error("denoise: pair " + std::to_string(i) + " contains a tab");
      rows.push_back(p.source + '\t' + p.target);
    }
    auto lines = run_line_command(cmd_, rows, "scorer");
    std::vector<double> out;
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto v = parse_double(lines[i]);
      if (!v || !std::isfinite(*v))
        throw Error("denoise: scorer output line " + std::to_string(i + 1) + " is not a number: '" + lines[i] + "'");
      out.push_back(*v);
    }
    return out;
  }

 private:
  LineCommand cmd_;
};

/// Sets sim_score on every pair. Order and texts are unchanged.
inline Corpus score_corpus(const Corpus& corpus, const SimilarityScorer& scorer) {
  auto scores = scorer.score(corpus);
  if (scores.size() != corpus.size())
    throw Error("denoise: scorer returned " + std::to_string(scores.size()) + " scores for " +
                std::to_string(corpus.size()) + " pairs");
  Corpus out = corpus;
  for (std::size_t i = 0; i < out.size(); ++i) out.items[i].sim_score = scores[i];
  return out;
}

struct DenoiseConfig {
  double threshold = 0.7;  // pairs scoring below are dropped

  void validate() const {
    if (!(threshold >= -1.0 && threshold <= 1.0)) throw Error("denoise: threshold must be in [-1, 1]");
  }
};

inline std::pair<Corpus, StageReport> filter_by_similarity(const Corpus& corpus, const DenoiseConfig& cfg = {}) {
  cfg.validate();
  Corpus out = corpus.like();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& p = corpus.items[i];
    if (!p.sim_score) throw Error("denoise: pair " + std::to_string(i) + " has no similarity score");
    if (*p.sim_score >= cfg.threshold) out.items.push_back(p);
  }
  StageReport report{"denoise", corpus.size(), out.size(), {{"similarity", corpus.size() - out.size()}}};
  return {std::move(out), std::move(report)};
}

}  // namespace lowres

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowres/corpus.hpp"
#include "lowres/error.hpp"

namespace lowres {

using json = nlohmann::json;

enum class DatasetKind { Parallel, Mono, Bpe, Align };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Parallel: return "parallel";
    case DatasetKind::Mono: return "mono";
    case DatasetKind::Bpe: return "bpe";
    case DatasetKind::Align: return "align";
  }
  return "parallel";
}

inline std::optional<DatasetKind> parse_dataset_kind(std::string_view s) {
  for (auto k : {DatasetKind::Parallel, DatasetKind::Mono, DatasetKind::Bpe, DatasetKind::Align})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline LanguagePair parse_language_pair(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw Error("language pair '" + s + "' must look like 'es-arg'");
  return LanguagePair{LangCode(s.substr(0, dash)), LangCode(s.substr(dash + 1))};
}

/// A declared input file (or file pair).
struct InputSpec {
  std::string name;
  DatasetKind kind = DatasetKind::Parallel;
  CorpusFormat format = CorpusFormat::Tsv;
  std::vector<std::filesystem::path> paths;  // resolved against the manifest directory
  std::optional<LanguagePair> pair;
  std::optional<LangCode> lang;
};

struct StageSpec {
  std::string name;
  std::string op;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json params = json::object();
};

/// Declarative stage graph. Seeds, thresholds and per-stage parameters all
/// live here so a run is reproducible from the manifest alone.
struct PipelineManifest {
  std::optional<std::uint64_t> seed;
  std::filesystem::path base_dir;  // directory relative paths resolve against
  std::filesystem::path work_dir;
  unsigned threads = 1;
  std::map<std::string, InputSpec> inputs;
  std::vector<StageSpec> stages;
};

struct Diagnostic {
  std::string where;    // "global.seed", "stage 'clean'", "inputs.bitext" ...
  std::string message;

  std::string str() const { return message.empty() ? where : where + ": " + message; }
};

namespace detail {

inline std::vector<std::string> string_list(const json& j, const std::string& where) {
  std::vector<std::string> out;
  if (j.is_string()) {
    out.push_back(j.get<std::string>());
  } else if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_string()) throw Error(where + ": expected a list of strings");
      out.push_back(e.get<std::string>());
    }
  } else if (!j.is_null()) {
    throw Error(where + ": expected a string or a list of strings");
  }
  return out;
}

}  // namespace detail

/// Parses the manifest structure. Semantic problems (missing seed, bad
/// parameters, cycles) are left for validate_manifest; only malformed JSON
/// shapes throw here.
inline PipelineManifest parse_manifest(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error("manifest: top level must be an object");
  PipelineManifest m;
  m.base_dir = base_dir;
  m.work_dir = base_dir / "work";
  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (j.contains("global")) {
    const auto& g = j.at("global");
    if (!g.is_object()) throw Error("manifest: 'global' must be an object");
    if (g.contains("seed")) {
      if (!g.at("seed").is_number_integer()) throw Error("global.seed: expected an integer");
      m.seed = g.at("seed").get<std::uint64_t>();
    }
    if (g.contains("work_dir")) m.work_dir = resolve(g.at("work_dir").get<std::string>());
    if (g.contains("threads")) m.threads = g.at("threads").get<unsigned>();
  }
  if (j.contains("inputs")) {
    const auto& ins = j.at("inputs");
    if (!ins.is_object()) throw Error("manifest: 'inputs' must be an object");
    for (const auto& [name, spec] : ins.items()) {
      const std::string where = "inputs." + name;
      if (!spec.is_object()) throw Error(where + ": expected an object");
      InputSpec in;
      in.name = name;
      const auto kind = parse_dataset_kind(spec.value("kind", "parallel"));
      if (!kind) throw Error(where + ".kind: unknown kind '" + spec.value("kind", "") + "'");
      in.kind = *kind;
      const std::string fmt = spec.value("format", "tsv");
      if (fmt == "two-file") in.format = CorpusFormat::TwoFile;
      else if (fmt != "tsv") throw Error(where + ".format: expected 'tsv' or 'two-file'");
      for (const auto& p : detail::string_list(spec.value("path", json()), where + ".path")) in.paths.push_back(resolve(p));
      for (const auto& p : detail::string_list(spec.value("paths", json()), where + ".paths")) in.paths.push_back(resolve(p));
      if (spec.contains("pair")) in.pair = parse_language_pair(spec.at("pair").get<std::string>());
      if (spec.contains("lang")) in.lang = LangCode(spec.at("lang").get<std::string>());
      m.inputs.emplace(name, std::move(in));
    }
  }
  if (j.contains("stages")) {
    const auto& st = j.at("stages");
    if (!st.is_array()) throw Error("manifest: 'stages' must be a list");
    for (std::size_t i = 0; i < st.size(); ++i) {
      const auto& s = st[i];
      const std::string where = "stages[" + std::to_string(i) + "]";
      if (!s.is_object()) throw Error(where + ": expected an object");
      StageSpec spec;
      spec.name = s.value("name", "");
      spec.op = s.value("op", spec.name);
      spec.inputs = detail::string_list(s.value("inputs", s.value("input", json())), where + ".inputs");
      spec.outputs = detail::string_list(s.value("outputs", s.value("output", json())), where + ".outputs");
      if (s.contains("params")) {
        if (!s.at("params").is_object()) throw Error(where + ".params: expected an object");
        spec.params = s.at("params");
      }
      m.stages.push_back(std::move(spec));
    }
  }
  return m;
}

inline PipelineManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw Error("manifest '" + path.string() + "': " + e.what());
  }
  auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  try {
    return parse_manifest(j, dir);
  } catch (const json::exception& e) {
    throw Error("manifest '" + path.string() + "': " + e.what());
  }
}

}  // namespace lowres

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "lowres/pipeline.hpp"

using namespace lowres;
namespace fs = std::filesystem;

namespace {

json base_manifest() {
  json j;
  j["global"] = {{"seed", 1}};
  j["inputs"]["raw"] = {{"kind", "parallel"}, {"path", "raw.tsv"}, {"pair", "es-arg"}};
  j["stages"] = json::array();
  return j;
}

std::vector<std::string> wheres(const std::vector<Diagnostic>& d) {
  std::vector<std::string> out;
  for (const auto& x : d) out.push_back(x.str());
  return out;
}

bool any_contains(const std::vector<Diagnostic>& d, const std::string& needle) {
  for (const auto& x : d)
    if (x.str().find(needle) != std::string::npos) return true;
  return false;
}

struct Workspace {
  detail::ScratchDir dir;
  Workspace() {
    Corpus c = fixtures::dictionary_corpus(10, 30, 5, 1).corpus;
    write_tsv(dedup(c), dir.path() / "raw.tsv");
  }
  PipelineManifest manifest(const json& j) const { return parse_manifest(j, dir.path()); }
};

}  // namespace

TEST(Validate, MissingSeed) {
  Workspace w;
  auto j = base_manifest();
  j["global"].erase("seed");
  const auto d = validate_manifest(w.manifest(j));
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].str(), "global.seed required");
}

TEST(Validate, ThresholdRange) {
  Workspace w;
  auto j = base_manifest();
  j["stages"].push_back({{"name", "den"}, {"op", "denoise"}, {"inputs", {"raw"}}, {"outputs", {"out"}},
                         {"params", {{"threshold", 1.5}, {"command", "cat"}}}});
  const auto d = validate_manifest(w.manifest(j));
  ASSERT_EQ(d.size(), 1u) << ::testing::PrintToString(wheres(d));
  EXPECT_EQ(d[0].where, "stage 'den'");
  EXPECT_NE(d[0].message.find("params.threshold"), std::string::npos);
  EXPECT_NE(d[0].message.find("range"), std::string::npos);
}

TEST(Validate, Cycle) {
  Workspace w;
  auto j = base_manifest();
  j["stages"].push_back({{"name", "a"}, {"op", "mix"}, {"inputs", {"raw", "y"}}, {"outputs", {"x"}}});
  j["stages"].push_back({{"name", "b"}, {"op", "mix"}, {"inputs", {"x"}}, {"outputs", {"y"}}});
  const auto d = validate_manifest(w.manifest(j));
  EXPECT_TRUE(any_contains(d, "cycle")) << ::testing::PrintToString(wheres(d));
  EXPECT_TRUE(any_contains(d, "a, b"));
}

TEST(Validate, StructuralProblems) {
  Workspace w;
  auto j = base_manifest();
  j["inputs"]["gone"] = {{"kind", "mono"}, {"path", "missing.txt"}};
  j["stages"].push_back({{"name", "c"}, {"op", "clean"}, {"inputs", {"raw"}}, {"outputs", {"o"}}, {"params", {{"max_tokns", 5}}}});
  j["stages"].push_back({{"name", "d"}, {"op", "frobnicate"}, {"inputs", {"raw"}}, {"outputs", {"p"}}});
  j["stages"].push_back({{"name", "e"}, {"op", "clean"}, {"inputs", {"nowhere"}}, {"outputs", {"o"}}});
  j["stages"].push_back({{"name", "f"}, {"op", "bpe-encode"}, {"inputs", {"raw", "raw"}}, {"outputs", {"q"}}});
  j["stages"].push_back({{"name", "g"}, {"op", "upsample"}, {"inputs", {"raw"}}, {"outputs", {"r1", "r2"}}});
  const auto d = validate_manifest(w.manifest(j));
  EXPECT_TRUE(any_contains(d, "inputs.gone.path: file not found"));
  EXPECT_TRUE(any_contains(d, "stage 'c': params.max_tokns: unknown parameter"));
  EXPECT_TRUE(any_contains(d, "unknown op 'frobnicate'"));
  EXPECT_TRUE(any_contains(d, "'nowhere' is neither"));
  EXPECT_TRUE(any_contains(d, "'o' is produced by more than one stage"));
  EXPECT_TRUE(any_contains(d, "must be a bpe dataset"));
  EXPECT_TRUE(any_contains(d, "produces 1 output(s), 2 declared"));
}

TEST(Validate, ValidManifestHasNoDiagnostics) {
  Workspace w;
  auto j = base_manifest();
  j["stages"].push_back({{"name", "clean"}, {"inputs", {"raw"}}, {"outputs", {"cleaned"}}});
  EXPECT_TRUE(validate_manifest(w.manifest(j)).empty());
}

TEST(Validate, ReferenceManifestOnlyLacksData) {
  const auto m = load_manifest(fs::path(LOWRES_SOURCE_DIR) / "manifests" / "reference.json");
  const auto d = validate_manifest(m);
  EXPECT_EQ(d.size(), 10u);
  for (const auto& x : d) EXPECT_NE(x.message.find("file not found"), std::string::npos) << x.str();
}

TEST(Run, CleanOnCleanFixtureIsIdentity) {
  Workspace w;
  auto j = base_manifest();
  j["stages"].push_back({{"name", "clean"}, {"inputs", {"raw"}}, {"outputs", {"cleaned"}}});
  const auto m = w.manifest(j);
  const auto r = run_manifest(m);
  ASSERT_EQ(r.stages.size(), 1u);
  const auto& s = r.stages[0];
  EXPECT_EQ(s.inputs[0].second, s.outputs[0].count);
  for (const auto& [rule, n] : s.removed) EXPECT_EQ(n, 0u) << rule;
  const auto in = read_tsv(w.dir.path() / "raw.tsv");
  const auto out = read_tsv(m.work_dir / "cleaned.tsv");
  ASSERT_EQ(in.size(), out.size());
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_TRUE(in.items[i].same_text(out.items[i]));
  EXPECT_TRUE(fs::exists(m.work_dir / "run_report.json"));
  EXPECT_TRUE(fs::exists(m.work_dir / "run_report.txt"));
}

TEST(Run, ValidationFailsBeforeAnyStage) {
  Workspace w;
  auto j = base_manifest();
  j["global"].erase("seed");
  j["stages"].push_back({{"name", "clean"}, {"inputs", {"raw"}}, {"outputs", {"cleaned"}}});
  const auto m = w.manifest(j);
  EXPECT_THROW(run_manifest(m), ValidationFailure);
  EXPECT_FALSE(fs::exists(m.work_dir / "cleaned.tsv"));
}

TEST(Run, FailureKeepsEarlierOutputsOnly) {
  Workspace w;
  auto j = base_manifest();
  j["inputs"]["mono"] = {{"kind", "mono"}, {"path", "mono.txt"}, {"lang", "es"}};
  fixtures::write_text(w.dir.path() / "mono.txt", "uno\ndos\n");
  j["stages"].push_back({{"name", "clean"}, {"inputs", {"raw"}}, {"outputs", {"cleaned"}}});
  j["stages"].push_back({{"name", "ft"}, {"inputs", {"mono"}}, {"outputs", {"synthetic"}},
                         {"params", {{"pair", "es-arg"}, {"teacher_cmd", "echo teacher crashed >&2; exit 3"}}}});
  j["stages"].push_back({{"name", "mix"}, {"inputs", {"cleaned", "synthetic"}}, {"outputs", {"mixed"}}});
  const auto m = w.manifest(j);
  // stale output from an earlier run must not survive
  fixtures::write_text(m.work_dir / "mixed.tsv", "old\tdata\n");
  try {
    run_manifest(m);
    FAIL();
  } catch (const StageFailure& e) {
    EXPECT_EQ(e.stage(), "ft");
    EXPECT_NE(std::string(e.what()).find("teacher crashed"), std::string::npos);
  }
  EXPECT_TRUE(fs::exists(m.work_dir / "cleaned.tsv"));
  EXPECT_FALSE(fs::exists(m.work_dir / "synthetic.tsv"));
  EXPECT_FALSE(fs::exists(m.work_dir / "mixed.tsv"));
}

TEST(Run, OrderFollowsDependencies) {
  Workspace w;
  auto j = base_manifest();
  j["stages"].push_back({{"name", "second"}, {"op", "tag"}, {"inputs", {"cleaned"}}, {"outputs", {"tagged"}}});
  j["stages"].push_back({{"name", "first"}, {"op", "clean"}, {"inputs", {"raw"}}, {"outputs", {"cleaned"}}});
  const auto r = run_manifest(w.manifest(j));
  ASSERT_EQ(r.stages.size(), 2u);
  EXPECT_EQ(r.stages[0].name, "first");
  EXPECT_EQ(r.stages[1].name, "second");
}

TEST(Run, StageSeedsDependOnName) {
  EXPECT_NE(stage_seed(1, "mix_a"), stage_seed(1, "mix_b"));
  EXPECT_EQ(stage_seed(1, "mix_a"), stage_seed(1, "mix_a"));
  EXPECT_NE(stage_seed(1, "mix_a"), stage_seed(2, "mix_a"));
}

TEST(Run, FullFixtureDeterministicAndChained) {
  detail::ScratchDir dir;
  const auto fx = fixtures::pipeline_fixture(dir.path());
  const auto m = load_manifest(fx.manifest);
  ASSERT_TRUE(validate_manifest(m).empty()) << ::testing::PrintToString(wheres(validate_manifest(m)));
  const auto a = run_manifest(m);
  const auto b = run_manifest(m);
  ASSERT_EQ(a.stages.size(), b.stages.size());
  std::map<std::string, std::size_t> produced;
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    for (std::size_t k = 0; k < a.stages[i].outputs.size(); ++k) {
      EXPECT_EQ(a.stages[i].outputs[k].digest, b.stages[i].outputs[k].digest) << a.stages[i].outputs[k].name;
      produced[a.stages[i].outputs[k].name] = a.stages[i].outputs[k].count;
    }
    for (const auto& [name, n] : a.stages[i].inputs) {
      if (produced.count(name)) {
        EXPECT_EQ(n, produced[name]) << a.stages[i].name << " <- " << name;
      }
    }
  }
}

TEST(Run, MatchesStagesRunByHand) {
  detail::ScratchDir dir;
  const auto fx = fixtures::pipeline_fixture(dir.path());
  const auto m = load_manifest(fx.manifest);
  const auto report = run_manifest(m);
  for (const std::string lang : {"arg", "arn", "ast"}) {
    auto raw = read_tsv(dir.path() / ("es-" + lang + ".tsv"));
    raw.pair = parse_language_pair("es-" + lang);
    const auto cleaned = clean_corpus(raw).first;
    AlignTrainConfig acfg;
    const auto fwd = train_alignment(cleaned, acfg);
    const auto rev = train_alignment(swap_sides(cleaned), acfg);
    const auto aligned = filter_by_alignment(cleaned, fwd, rev, PercentilePolicy{10}).first;
    const auto denoised =
        filter_by_similarity(score_corpus(aligned, ExternalScorer(LineCommand{fixtures::kLengthRatioScorer})), {0.7}).first;
    EXPECT_EQ(report.stage("clean_" + lang)->outputs[0].count, cleaned.size());
    EXPECT_EQ(report.stage("align_" + lang)->outputs[0].count, aligned.size());
    EXPECT_EQ(report.stage("denoise_" + lang)->outputs[0].count, denoised.size());
    const auto written = read_tsv(m.work_dir / ("denoised_" + lang + ".tsv"));
    EXPECT_EQ(format_tsv(written), format_tsv(denoised));
  }
}

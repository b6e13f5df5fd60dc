#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "claritykit/eval.hpp"
#include "claritykit/features_io.hpp"
#include "claritykit/pipeline.hpp"
#include "fixtures.hpp"

using namespace clarity;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("claritykit_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

// 20 executable samples in three mutation groups plus two isolated ones,
// then one exact duplicate and one metadata-only record.
std::vector<SampleRecord> demo_corpus() {
  const auto bases = eval::synthesize_corpus(5, 77);
  eval::GroundTruthSpec spec;
  spec.group_sizes = {8, 6, 4};
  spec.isolated = 2;
  spec.mutation.rates = {{eval::MutationOp::kRegisterRename, 0.5}, {eval::MutationOp::kConstantEdit, 0.5}};
  spec.mutation.seed = 3;
  auto samples = eval::build_ground_truth(bases, spec).samples;
  samples[3].org_labels = {{"Fancy Bear", "vendor-a"}, {"Sofacy", "vendor-b"}};
  auto dup = samples[5];
  dup.org_labels = {{"Lazarus Group", "vendor-c"}};
  samples.push_back(dup);
  auto meta = fx::sample("metadata-only", {});
  meta.file_type = "PDF";
  samples.push_back(meta);
  return samples;
}

PipelineConfig demo_config(const fs::path& dir) {
  write_corpus(dir / "corpus.jsonl", demo_corpus());
  PipelineConfig c;
  c.corpus = dir / "corpus.jsonl";
  c.kb = fs::path(CLARITYKIT_SOURCE_DIR) / "config" / "kb_sample.json";
  c.output_dir = dir / "out";
  c.qc_seed = 9;
  return c;
}

}  // namespace

TEST(TomlSubset, ParsesTablesAndValues) {
  const auto j = parse_toml_subset(R"(
# top comment
title = "demo"   # trailing
[a]
n = 42
neg = -7
x = 1.5e-3
flag = true
list = [1, 2, 3]
names = ["p", "q#r"]
[a.b]
s = 'single'
)");
  EXPECT_EQ(j["title"], "demo");
  EXPECT_EQ(j["a"]["n"], 42);
  EXPECT_EQ(j["a"]["neg"], -7);
  EXPECT_DOUBLE_EQ(j["a"]["x"].get<double>(), 1.5e-3);
  EXPECT_EQ(j["a"]["flag"], true);
  EXPECT_EQ(j["a"]["list"], json::array({1, 2, 3}));
  EXPECT_EQ(j["a"]["names"], json::array({"p", "q#r"}));
  EXPECT_EQ(j["a"]["b"]["s"], "single");
}

TEST(TomlSubset, ErrorsCarryLineNumbers) {
  auto message = [](std::string_view text) {
    try {
      parse_toml_subset(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("<accepted>");
  };
  EXPECT_NE(message("a = 1\na = 2\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("[x]\nnot a pair\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("[unterminated\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("s = \"open\n").find("line 1"), std::string::npos);
}

TEST(PipelineConfig, ShippedExampleParses) {
  const auto j = load_toml_subset(fs::path(CLARITYKIT_SOURCE_DIR) / "config" / "pipeline.toml");
  const auto c = PipelineConfig::from_json(j, fs::path(CLARITYKIT_SOURCE_DIR) / "config");
  EXPECT_EQ(c.similarity.tau, 0.9999);
  EXPECT_EQ(c.funcluster.ann.k, 64u);
  EXPECT_EQ(c.qc_seed, 42u);
  EXPECT_EQ(c.kb->filename(), "kb_sample.json");
  EXPECT_EQ(PipelineConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(PipelineConfig, RejectsBadValues) {
  const auto dir = scratch("badcfg");
  std::ofstream(dir / "c.jsonl") << "";
  auto base = [&] { return json{{"paths", {{"corpus", (dir / "c.jsonl").string()}}}}; };
  EXPECT_NO_THROW(PipelineConfig::from_json(base()).validate());

  auto j = base();
  j["similarity"] = {{"tau", 1.5}};
  EXPECT_THROW(PipelineConfig::from_json(j).validate(), ConfigError);
  j = base();
  j["features"] = {{"wl_rounds", "two"}};
  EXPECT_THROW(PipelineConfig::from_json(j), ConfigError);
  j = base();
  j["features"] = {{"bogus", 1}};
  EXPECT_THROW(PipelineConfig::from_json(j), ConfigError);
  j = base();
  j["features"] = {{"structural_mode", "xyz"}};
  EXPECT_THROW(PipelineConfig::from_json(j).validate(), ConfigError);
  j = base();
  j["paths"]["corpus"] = (dir / "missing.jsonl").string();
  EXPECT_THROW(PipelineConfig::from_json(j).validate(), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json(json::object()), ConfigError);
  fs::remove_all(dir);
}

TEST(Pipeline, StagesMatchDirectComputation) {
  const auto dir = scratch("equiv");
  const auto cfg = demo_config(dir);
  const auto m = run_pipeline(cfg);
  ASSERT_EQ(m.status, "ok") << m.failed_stage;
  ASSERT_EQ(m.stages.size(), kStageNames.size());
  for (std::size_t i = 0; i < m.stages.size(); ++i) EXPECT_EQ(m.stages[i].name, kStageNames[i]);

  // Direct path through the library.
  auto raw = ingest_corpus(cfg.corpus);
  EXPECT_EQ(raw.size(), 22u);
  auto normalized = alias::normalize_labels(raw, alias::KnowledgeBase::load(*cfg.kb)).samples;
  auto exact = exact_hash_dedup(normalized);
  std::vector<SampleRecord> clean;
  for (auto& s : exact.kept) {
    if (!s.is_executable()) continue;
    apply_label_consensus(s, cfg.gini_threshold);
    clean.push_back(s);
  }
  EXPECT_EQ(clean.size(), 20u);
  const auto& clean_counts = m.stages[2].counts;
  EXPECT_EQ(clean_counts.at("in"), 22u);
  EXPECT_EQ(clean_counts.at("after_exact_hash"), 21u);
  EXPECT_EQ(clean_counts.at("out"), 20u);

  std::vector<DedupItem> items;
  for (const auto& s : clean) {
    const auto f = extract_sample(s, TaxonomyTable::default_x86(), cfg.features);
    items.push_back({s.sha256, s.first_seen, qc::label_consensus(s.org_labels).label.value_or("unknown"), f.global});
  }
  DedupOptions opts;
  opts.similarity = cfg.similarity;
  const auto direct = dedup(items, opts);

  const auto lines = read_jsonl(cfg.output_dir / "clusters.jsonl");
  ASSERT_EQ(lines.size(), direct.clusters.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    EXPECT_EQ(lines[i]["representative"], direct.clusters[i].representative);
    EXPECT_EQ(lines[i]["members"].get<std::vector<std::string>>(), direct.clusters[i].members);
  }
  const auto removed = read_jsonl(cfg.output_dir / "removed.jsonl");
  EXPECT_EQ(removed.size(), direct.ledger.size());
  // Three mutation groups collapse to their bases under operand-only edits.
  EXPECT_EQ(direct.clusters.size(), 5u);

  const auto kept = read_features(cfg.output_dir / "kept_features.jsonl");
  EXPECT_EQ(kept.records.size(), 5u);
  const auto qc = json::parse(slurp(cfg.output_dir / "qc.json"));
  EXPECT_TRUE(qc.is_object());
  EXPECT_TRUE(fs::exists(cfg.output_dir / "frc.jsonl"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "review.jsonl"));
  fs::remove_all(dir);
}

TEST(Pipeline, NormalizationFeedsConsensus) {
  const auto dir = scratch("labels");
  const auto cfg = demo_config(dir);
  ASSERT_EQ(run_pipeline(cfg).status, "ok");
  // "Fancy Bear" and "Sofacy" both resolve to APT28, so consensus holds.
  const auto samples = ingest_corpus(cfg.corpus);
  const auto feats = read_features(cfg.output_dir / "features.jsonl");
  bool found = false;
  for (const auto& r : feats.records)
    if (r.sha256 == samples[3].sha256) {
      found = true;
      EXPECT_EQ(r.label, "APT28");
    }
  EXPECT_TRUE(found);
  fs::remove_all(dir);
}

TEST(Pipeline, DeterministicAcrossRuns) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  auto ca = demo_config(a), cb = demo_config(b);
  const auto ma = run_pipeline(ca), mb = run_pipeline(cb);
  ASSERT_EQ(ma.status, "ok");
  ASSERT_EQ(ma.stages.size(), mb.stages.size());
  for (std::size_t i = 0; i < ma.stages.size(); ++i) {
    EXPECT_EQ(ma.stages[i].outputs, mb.stages[i].outputs) << ma.stages[i].name;
    EXPECT_EQ(ma.stages[i].counts, mb.stages[i].counts);
  }
  for (const auto& f : {"clusters.jsonl", "removed.jsonl", "frc.jsonl", "qc.json", "features.jsonl"})
    EXPECT_EQ(slurp(ca.output_dir / f), slurp(cb.output_dir / f)) << f;
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, ResumesCompletedStages) {
  const auto dir = scratch("resume");
  auto cfg = demo_config(dir);
  const auto first = run_pipeline(cfg);
  ASSERT_EQ(first.status, "ok");
  const auto second = run_pipeline(cfg);
  ASSERT_EQ(second.status, "ok");
  for (std::size_t i = 0; i < second.stages.size(); ++i) {
    EXPECT_TRUE(second.stages[i].resumed) << second.stages[i].name;
    EXPECT_EQ(second.stages[i].key, first.stages[i].key);
  }
  EXPECT_EQ(first.to_json(false), second.to_json(false));

  // A corrupted output invalidates only its stage and what follows.
  const auto dedup_dir = cfg.output_dir / "stages" / ("dedup-" + first.stages[4].key);
  std::ofstream(dedup_dir / "clusters.jsonl", std::ios::app) << "\n";
  const auto third = run_pipeline(cfg);
  EXPECT_TRUE(third.stages[3].resumed);
  EXPECT_FALSE(third.stages[4].resumed);
  EXPECT_TRUE(third.stages[5].resumed);  // same input digest as before

  // Changing a dedup parameter reruns dedup with a new key.
  cfg.similarity.tau = 0.99;
  const auto fourth = run_pipeline(cfg);
  EXPECT_TRUE(fourth.stages[3].resumed);
  EXPECT_FALSE(fourth.stages[4].resumed);
  EXPECT_NE(fourth.stages[4].key, first.stages[4].key);
  fs::remove_all(dir);
}

TEST(Pipeline, QcFollowsDedupOutput) {
  const auto dir = scratch("qc_key");
  auto cfg = demo_config(dir);
  cfg.funcluster.min_cluster_size = 1u << 20;  // function clusters stay empty
  ASSERT_EQ(run_pipeline(cfg).status, "ok");
  auto smaller = demo_corpus();
  smaller.resize(10);
  write_corpus(cfg.corpus, smaller);
  const auto m = run_pipeline(cfg);
  ASSERT_EQ(m.status, "ok");
  EXPECT_FALSE(m.stages[6].resumed);
  EXPECT_EQ(m.stages[6].counts.at("samples"), m.stages[4].counts.at("out"));
  fs::remove_all(dir);
}

TEST(Pipeline, FailureRecordedInManifest) {
  const auto dir = scratch("fail");
  auto cfg = demo_config(dir);
  std::ofstream(cfg.corpus, std::ios::app) << "{\"schema_version\": 1}\n";
  const auto m = run_pipeline(cfg);
  EXPECT_EQ(m.status, "failed");
  EXPECT_EQ(m.failed_stage, "ingest");
  ASSERT_EQ(m.stages.size(), kStageNames.size());
  EXPECT_EQ(m.stages[0].status, "failed");
  EXPECT_FALSE(m.stages[0].error.empty());
  for (std::size_t i = 1; i < m.stages.size(); ++i) EXPECT_EQ(m.stages[i].status, "not_run");
  const auto written = json::parse(slurp(cfg.output_dir / "manifest.json"));
  EXPECT_EQ(written["status"], "failed");
  EXPECT_FALSE(fs::exists(cfg.output_dir / "stages" / ("ingest-" + m.stages[0].key)));
  fs::remove_all(dir);
}

TEST(Pipeline, EmptyCorpus) {
  const auto dir = scratch("empty");
  std::ofstream(dir / "corpus.jsonl") << "";
  PipelineConfig cfg;
  cfg.corpus = dir / "corpus.jsonl";
  cfg.output_dir = dir / "out";
  const auto m = run_pipeline(cfg);
  EXPECT_EQ(m.status, "ok") << m.failed_stage;
  EXPECT_TRUE(read_jsonl(cfg.output_dir / "clusters.jsonl").empty());
  fs::remove_all(dir);
}

TEST(Pipeline, ConfigErrorsThrowBeforeRunning) {
  const auto dir = scratch("cfgerr");
  PipelineConfig cfg;
  cfg.corpus = dir / "nope.jsonl";
  cfg.output_dir = dir / "out";
  EXPECT_THROW(run_pipeline(cfg), ConfigError);
  EXPECT_FALSE(fs::exists(cfg.output_dir));
  fs::remove_all(dir);
}

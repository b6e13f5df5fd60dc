#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "claritykit/corpus.hpp"
#include "fixtures.hpp"

using namespace clarity;
using nlohmann::json;

namespace {

json minimal_export() {
  return json::parse(R"({
    "schema_version": 1,
    "sha256": "AB00000000000000000000000000000000000000000000000000000000000001",
    "org_labels": [["APT28", "vendor-a"]],
    "first_seen": "2016-07-01",
    "file_type": "PE32",
    "packed": false,
    "functions": [{"function_id": "main", "start_address": 4096, "cfg_size": 1,
                   "blocks": [{"id": 0, "instructions": [{"mnemonic": "RET", "operand_count": 0}]}],
                   "edges": []}],
    "fcg_edges": []
  })");
}

std::string where_of(const json& j) {
  try {
    sample_from_json(j);
  } catch (const SchemaError& e) {
    return e.where();
  }
  return "<accepted>";
}

}  // namespace

TEST(Corpus, MinimalExportParses) {
  const auto s = sample_from_json(minimal_export());
  ASSERT_EQ(s.functions.size(), 1u);
  EXPECT_EQ(s.functions[0].cfg_size(), 1u);
  EXPECT_EQ(s.sha256, "ab00000000000000000000000000000000000000000000000000000000000001");
  EXPECT_EQ(s.functions[0].cfg.blocks[0].instructions[0].mnemonic, "ret");
  EXPECT_EQ(s.packed, std::optional<bool>(false));
}

TEST(Corpus, DanglingCallEdgeNamesTheEdge) {
  auto j = minimal_export();
  j["fcg_edges"] = json::array({json::array({"main", "missing"})});
  try {
    sample_from_json(j);
    FAIL() << "accepted a dangling call edge";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.where(), "fcg_edges[0]");
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
  }
}

TEST(Corpus, DanglingCfgEdgeRejected) {
  auto j = minimal_export();
  j["functions"][0]["edges"] = json::array({json::array({0, 5})});
  EXPECT_EQ(where_of(j), "functions[0].edges[0]");
}

TEST(Corpus, MalformedHashRejected) {
  auto j = minimal_export();
  j["sha256"] = "xyz";
  EXPECT_EQ(where_of(j), "sha256");
  j["sha256"] = std::string(63, 'a');
  EXPECT_EQ(where_of(j), "sha256");
}

TEST(Corpus, FieldErrorsCarryPaths) {
  auto j = minimal_export();
  j["functions"][0]["cfg_size"] = 2;
  EXPECT_EQ(where_of(j), "functions[0].cfg_size");

  j = minimal_export();
  j["functions"][0]["blocks"][0]["instructions"][0]["mnemonic"] = "mov eax";
  EXPECT_NE(where_of(j).find("functions[0].blocks[0].instructions[0]"), std::string::npos);

  j = minimal_export();
  j.erase("first_seen");
  EXPECT_EQ(where_of(j), "$.first_seen");

  j = minimal_export();
  j["first_seen"] = "1989-12-31";
  EXPECT_EQ(where_of(j), "first_seen");

  j = minimal_export();
  j["schema_version"] = 2;
  EXPECT_EQ(where_of(j), "schema_version");
}

TEST(Corpus, DuplicateIdsRejected) {
  auto j = minimal_export();
  auto fn = j["functions"][0];
  fn["function_id"] = "main";
  fn["start_address"] = 8192;
  j["functions"].push_back(fn);
  EXPECT_EQ(where_of(j), "functions[1].function_id");

  j = minimal_export();
  j["functions"][0]["blocks"].push_back(j["functions"][0]["blocks"][0]);
  j["functions"][0]["cfg_size"] = 2;
  EXPECT_EQ(where_of(j), "functions[0].blocks[1].id");
}

TEST(Corpus, SerializeParseSerializeFixpoint) {
  auto s = fx::sample("fixpoint", {fx::mov_add_jmp_fixture()});
  s.functions[0].cfg.blocks[0].instructions[0].operands = "eax, [ebx+0x10]";
  s.functions[0].cfg.blocks[1].loop_depth = 0;
  const auto once = serialize_sample(s);
  const auto back = parse_sample(once);
  EXPECT_EQ(back, s);
  EXPECT_EQ(serialize_sample(back), once);
}

TEST(Corpus, IngestionIsDeterministic) {
  const auto text = minimal_export().dump();
  EXPECT_EQ(parse_sample(text), parse_sample(text));
}

TEST(Corpus, IngestCorpusFromDirectoryAndJsonl) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "claritykit_corpus_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "b.json") << minimal_export().dump();
  auto other = minimal_export();
  other["sha256"] = std::string(64, 'c');
  std::ofstream(dir / "a.json") << other.dump();
  std::ofstream(dir / "ignored.txt") << "not json";
  const auto samples = ingest_corpus(dir);
  ASSERT_EQ(samples.size(), 2u);
  EXPECT_EQ(samples[0].sha256, std::string(64, 'c'));

  write_corpus(dir / "all.jsonl", samples);
  const auto again = ingest_corpus(dir / "all.jsonl");
  EXPECT_EQ(again, samples);

  std::ofstream(dir / "bad.jsonl") << minimal_export().dump() << "\n{\"schema_version\": 1}\n";
  try {
    ingest_corpus(dir / "bad.jsonl");
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.where().rfind("bad.jsonl:2:", 0), 0u) << e.where();
  }
  fs::remove_all(dir);
}

TEST(Corpus, MetadataOnlyRecordsAccepted) {
  auto j = minimal_export();
  j["file_type"] = "PDF";
  j["functions"] = json::array();
  const auto s = sample_from_json(j);
  EXPECT_FALSE(s.is_executable());
}

TEST(ExactDedup, SameHashSameLabel) {
  auto a = fx::sample("x", {fx::mov_add_jmp_fixture()});
  const auto r = exact_hash_dedup({a, a});
  ASSERT_EQ(r.kept.size(), 1u);
  ASSERT_EQ(r.collisions.size(), 1u);
  EXPECT_EQ(r.collisions[0].count, 2u);
  EXPECT_FALSE(r.collisions[0].conflicting);
}

TEST(ExactDedup, ConflictingLabelsFlagged) {
  auto a = fx::sample("x", {fx::mov_add_jmp_fixture()}, {}, "A");
  auto b = fx::sample("x", {fx::mov_add_jmp_fixture()}, {}, "B");
  const auto r = exact_hash_dedup({a, b});
  ASSERT_EQ(r.kept.size(), 1u);
  ASSERT_EQ(r.collisions.size(), 1u);
  EXPECT_TRUE(r.collisions[0].conflicting);
  EXPECT_EQ(r.kept[0].org_labels.size(), 2u);
}

TEST(ExactDedup, DistinctHashesUntouched) {
  const auto r = exact_hash_dedup({fx::sample("1", {}), fx::sample("2", {}), fx::sample("3", {})});
  EXPECT_EQ(r.kept.size(), 3u);
  EXPECT_TRUE(r.collisions.empty());
}

TEST(ExactDedup, KeptCountEqualsDistinctHashes) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<SampleRecord> in;
    std::set<std::string> distinct;
    std::map<std::string, std::set<std::string>> labels;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      const auto key = std::to_string(rng() % 8);
      const auto label = std::string(1, static_cast<char>('A' + rng() % 3));
      auto s = fx::sample(key, {}, {}, label);
      distinct.insert(s.sha256);
      labels[s.sha256].insert(label);
      in.push_back(std::move(s));
    }
    const auto r = exact_hash_dedup(in);
    EXPECT_EQ(r.kept.size(), distinct.size());
    for (const auto& k : r.kept) {
      std::set<std::string> got;
      for (const auto& l : k.org_labels) got.insert(l.label);
      EXPECT_EQ(got, labels[k.sha256]);
    }
    for (const auto& g : r.collisions) EXPECT_EQ(g.conflicting, labels[g.sha256].size() > 1);
  }
}

TEST(Corpus, ContentDigestIgnoresHash) {
  auto a = fx::sample("one", {fx::mov_add_jmp_fixture()});
  auto b = a;
  b.sha256 = fx::hash_of("two");
  EXPECT_EQ(content_digest(a), content_digest(b));
  b.functions[0].cfg.blocks[0].instructions[0].mnemonic = "lea";
  EXPECT_NE(content_digest(a), content_digest(b));
}

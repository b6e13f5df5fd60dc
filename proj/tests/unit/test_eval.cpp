#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "claritykit/eval.hpp"
#include "fixtures.hpp"

using namespace clarity;
using namespace clarity::eval;

namespace {

const TaxonomyTable& x86() { return TaxonomyTable::default_x86(); }

MutationSpec only(MutationOp op, double rate, std::uint64_t seed = 1) {
  MutationSpec m;
  m.rates[op] = rate;
  m.seed = seed;
  return m;
}

std::vector<std::string> mnemonics(const FunctionRecord& fn) {
  std::vector<std::string> out;
  for (const auto& b : fn.cfg.blocks)
    for (const auto& i : b.instructions) out.push_back(i.mnemonic);
  return out;
}

std::vector<OpcodeCfgVector> fn_vectors(const SampleRecord& s) {
  FeatureConfig cfg;
  cfg.cfg_size_weighting = false;
  std::vector<OpcodeCfgVector> out;
  for (const auto& fn : s.functions) out.push_back(function_opcode_cfg(fn, x86(), cfg, static_cast<bool*>(nullptr)));
  return out;
}

}  // namespace

TEST(Mutation, OpNamesRoundTrip) {
  for (auto op : {MutationOp::kRegisterRename, MutationOp::kNopPad, MutationOp::kBlockReorder, MutationOp::kConstantEdit,
                  MutationOp::kHelperRefactor})
    EXPECT_EQ(parse_mutation_op(to_string(op)), op);
  EXPECT_FALSE(parse_mutation_op("SHUFFLE").has_value());
}

TEST(Mutation, SpecValidation) {
  EXPECT_THROW(only(MutationOp::kNopPad, 1.5).validate(), std::invalid_argument);
  EXPECT_THROW(only(MutationOp::kNopPad, -0.1).validate(), std::invalid_argument);
  EXPECT_NO_THROW(only(MutationOp::kNopPad, 0.0).validate());
}

TEST(Mutation, OperandOnlyOpsKeepFeatures) {
  const auto base = synthesize_sample(3);
  for (auto op : {MutationOp::kRegisterRename, MutationOp::kConstantEdit}) {
    const auto m = mutate(base, only(op, 1.0)).sample;
    EXPECT_NE(m.sha256, base.sha256);
    ASSERT_EQ(m.functions.size(), base.functions.size());
    bool operands_changed = false;
    for (std::size_t f = 0; f < m.functions.size(); ++f) {
      EXPECT_EQ(mnemonics(m.functions[f]), mnemonics(base.functions[f]));
      EXPECT_EQ(m.functions[f].cfg.edges, base.functions[f].cfg.edges);
      for (std::size_t b = 0; b < m.functions[f].cfg.blocks.size(); ++b)
        for (std::size_t i = 0; i < m.functions[f].cfg.blocks[b].size(); ++i)
          operands_changed |= m.functions[f].cfg.blocks[b].instructions[i].operands !=
                              base.functions[f].cfg.blocks[b].instructions[i].operands;
    }
    EXPECT_TRUE(operands_changed) << to_string(op);
    EXPECT_EQ(fn_vectors(m), fn_vectors(base));
    FeatureConfig cfg;
    EXPECT_EQ(extract_sample(m, x86(), cfg).global, extract_sample(base, x86(), cfg).global);
  }
}

TEST(Mutation, NopPadOnlyAddsNops) {
  const auto base = synthesize_sample(4);
  const auto m = mutate(base, only(MutationOp::kNopPad, 0.5)).sample;
  std::size_t added = 0;
  for (std::size_t f = 0; f < m.functions.size(); ++f) {
    auto a = mnemonics(m.functions[f]);
    auto b = mnemonics(base.functions[f]);
    added += a.size() - b.size();
    std::vector<std::string> stripped;
    std::size_t k = 0;
    // Remove inserted nops: match base sequence greedily.
    for (const auto& x : a) {
      if (k < b.size() && x == b[k]) {
        ++k;
      } else {
        EXPECT_EQ(x, "nop");
      }
    }
    EXPECT_EQ(k, b.size());
    EXPECT_EQ(m.functions[f].cfg.edges, base.functions[f].cfg.edges);
  }
  EXPECT_GT(added, 0u);
}

TEST(Mutation, BlockReorderPreservesShape) {
  const auto base = synthesize_sample(5);
  const auto m = mutate(base, only(MutationOp::kBlockReorder, 1.0)).sample;
  bool moved = false;
  const auto vb = fn_vectors(base), vm = fn_vectors(m);
  for (std::size_t f = 0; f < m.functions.size(); ++f) {
    const auto& a = m.functions[f].cfg;
    const auto& b = base.functions[f].cfg;
    ASSERT_EQ(a.blocks.size(), b.blocks.size());
    EXPECT_EQ(a.edges.size(), b.edges.size());
    std::multiset<std::size_t> sa, sb;
    for (const auto& x : a.blocks) sa.insert(x.size());
    for (const auto& x : b.blocks) sb.insert(x.size());
    EXPECT_EQ(sa, sb);
    std::set<std::uint64_t> ia, ib;
    for (const auto& x : a.blocks) ia.insert(x.id);
    for (const auto& x : b.blocks) ib.insert(x.id);
    EXPECT_EQ(ia, ib);
    EXPECT_EQ(vm[f].w, vb[f].w);
    EXPECT_DOUBLE_EQ(vm[f].omega, vb[f].omega);
    moved |= vm[f].x != vb[f].x;
  }
  EXPECT_TRUE(moved);
}

TEST(Mutation, HelperRefactorSplitsOneBlock) {
  const auto base = synthesize_sample(6);
  const auto out = mutate(base, only(MutationOp::kHelperRefactor, 1.0));
  EXPECT_TRUE(out.notices.empty());
  std::size_t extra_blocks = 0;
  for (std::size_t f = 0; f < base.functions.size(); ++f) {
    extra_blocks += out.sample.functions[f].cfg.blocks.size() - base.functions[f].cfg.blocks.size();
    EXPECT_EQ(mnemonics(out.sample.functions[f]), mnemonics(base.functions[f]));
  }
  EXPECT_EQ(extra_blocks, 1u);
  EXPECT_NO_THROW(parse_sample(serialize_sample(out.sample)));
}

TEST(Mutation, NoSiteNotice) {
  // Single function, no caller, no registers or constants.
  const auto s = fx::sample("n", {fx::function("f", 0, {fx::block(0, {"ret"})})});
  const auto out = mutate(s, only(MutationOp::kHelperRefactor, 1.0));
  ASSERT_EQ(out.notices.size(), 1u);
  EXPECT_NE(out.notices[0].find("HELPER_REFACTOR"), std::string::npos);
}

TEST(Mutation, DeterministicAndSeedSensitive) {
  const auto base = synthesize_sample(7);
  MutationSpec spec;
  spec.rates = {{MutationOp::kRegisterRename, 0.5}, {MutationOp::kNopPad, 0.1}, {MutationOp::kBlockReorder, 0.5}};
  spec.seed = 11;
  EXPECT_EQ(mutate(base, spec).sample, mutate(base, spec).sample);
  auto other = spec;
  other.seed = 12;
  EXPECT_NE(mutate(base, spec).sample.sha256, mutate(base, other).sample.sha256);
}

TEST(Mutation, OutputIsValidSample) {
  const auto base = synthesize_sample(8);
  MutationSpec spec;
  for (auto op : {MutationOp::kRegisterRename, MutationOp::kNopPad, MutationOp::kBlockReorder, MutationOp::kConstantEdit,
                  MutationOp::kHelperRefactor})
    spec.rates[op] = 0.7;
  const auto m = mutate(base, spec).sample;
  EXPECT_EQ(parse_sample(serialize_sample(m)), m);
}

TEST(Synthetic, SamplesAreValidAndVaried) {
  const SyntheticSpec spec;
  const auto corpus = synthesize_corpus(30, 99, spec);
  ASSERT_EQ(corpus.size(), 30u);
  std::set<std::string> hashes;
  for (const auto& s : corpus) {
    EXPECT_EQ(parse_sample(serialize_sample(s)), s);
    EXPECT_GE(s.functions.size(), spec.min_functions);
    EXPECT_LE(s.functions.size(), spec.max_functions);
    hashes.insert(s.sha256);
  }
  EXPECT_EQ(hashes.size(), 30u);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t j = i + 1; j < corpus.size(); ++j) {
      const auto a = category_mix(corpus[i], x86()), b = category_mix(corpus[j], x86());
      double tv = 0;
      for (std::size_t k = 0; k < kNumCategories; ++k) tv += std::abs(a[k] - b[k]);
      EXPECT_GE(tv / 2, spec.min_mix_distance);
    }
  EXPECT_EQ(synthesize_corpus(30, 99, spec), corpus);
}

TEST(Synthetic, CategoryMixSumsToOne) {
  const auto mix = category_mix(synthesize_sample(9), x86());
  EXPECT_NEAR(std::accumulate(mix.begin(), mix.end(), 0.0), 1.0, 1e-12);
}

TEST(GroundTruth, SmallFixture) {
  const auto bases = synthesize_corpus(3, 1);
  GroundTruthSpec spec;
  spec.group_sizes = {2, 3};
  spec.isolated = 1;
  spec.mutation = only(MutationOp::kRegisterRename, 0.5);
  const auto gt = build_ground_truth(bases, spec);
  EXPECT_EQ(gt.samples.size(), 6u);
  EXPECT_EQ(gt.duplicate_groups, 2u);
  // C(2,2) + C(3,2)
  EXPECT_EQ(gt.positive_pairs(), 4u);
  std::set<std::string> hashes;
  for (const auto& s : gt.samples) hashes.insert(s.sha256);
  EXPECT_EQ(hashes.size(), 6u);
  std::size_t brute = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = i + 1; j < 6; ++j) brute += gt.duplicate_pair(i, j);
  EXPECT_EQ(brute, 4u);
  EXPECT_THROW(build_ground_truth({bases[0]}, spec), std::invalid_argument);
}

TEST(GroundTruth, GroupSizes) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto sizes = draw_group_sizes(136, 1096, 2, 69, seed);
    ASSERT_EQ(sizes.size(), 136u);
    EXPECT_EQ(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}), 1096u);
    EXPECT_GE(*std::min_element(sizes.begin(), sizes.end()), 2u);
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()), 69u);
  }
  EXPECT_THROW(draw_group_sizes(3, 100, 2, 5, 1), std::invalid_argument);
}

TEST(Ablation, MatrixRows) {
  const auto& m = ablation_matrix();
  ASSERT_EQ(m.size(), 17u);
  std::set<std::string> ids;
  for (const auto& c : m) {
    ids.insert(c.id);
    EXPECT_NO_THROW(c.features.validate());
    EXPECT_NO_THROW(c.similarity.validate());
  }
  EXPECT_EQ(ids.size(), 17u);
  EXPECT_EQ(ablation_config("H3").similarity.metric, Metric::kHybrid);
  EXPECT_TRUE(ablation_config("H3").features.cfg_size_weighting);
  EXPECT_EQ(ablation_config("B1").features.representation, Representation::kStringHash);
  EXPECT_EQ(ablation_config("B1").features.structural_mode, StructuralMode::kCentroid);
  EXPECT_FALSE(ablation_config("B1").features.enable_opcode_features);
  EXPECT_THROW(ablation_config("Z9"), std::invalid_argument);
}

TEST(Ablation, EvaluateSmallCorpus) {
  const auto bases = synthesize_corpus(6, 3);
  GroundTruthSpec spec;
  spec.group_sizes = {3, 2, 2};
  spec.isolated = 3;
  spec.mutation = only(MutationOp::kRegisterRename, 0.5);
  const auto gt = build_ground_truth(bases, spec);
  const auto scores = score_corpus(gt, ablation_config("H3"), x86());
  EXPECT_EQ(scores.size(), gt.samples.size() * (gt.samples.size() - 1) / 2);
  const auto row = evaluate_config(gt, ablation_config("H3"), kDefaultThresholds, x86());
  ASSERT_EQ(row.metrics.size(), kDefaultThresholds.size());
  for (const auto& m : row.metrics) {
    EXPECT_EQ(m.confusion.total(), scores.size());
    EXPECT_EQ(m.confusion.tp + m.confusion.fn, gt.positive_pairs());
  }
  // Register renaming leaves features untouched: every duplicate pair scores 1.
  EXPECT_EQ(row.metrics[row.best].confusion.f1(), 1.0);
  EXPECT_EQ(row.best, kDefaultThresholds.size() - 1);

  const auto csv = ablation_csv({row});
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "config_id,threshold,tp,fp,tn,fn,precision,recall,f1,wall_ms");
  std::size_t lines = 0;
  while (std::getline(in, line)) lines += !line.empty() && line.rfind("H3,", 0) == 0;
  EXPECT_EQ(lines, kDefaultThresholds.size());
}

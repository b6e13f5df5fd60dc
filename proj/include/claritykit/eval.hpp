#pragma once

// Mutation-based ground truth and the ablation matrix.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "claritykit/corpus.hpp"
#include "claritykit/dedup.hpp"
#include "claritykit/features.hpp"
#include "claritykit/similarity.hpp"
#include "claritykit/taxonomy.hpp"

namespace clarity::eval {

enum class MutationOp : std::uint8_t { kRegisterRename, kNopPad, kBlockReorder, kConstantEdit, kHelperRefactor };

std::string_view to_string(MutationOp op) noexcept;
std::optional<MutationOp> parse_mutation_op(std::string_view name) noexcept;

struct MutationSpec {
  std::map<MutationOp, double> rates;  // enabled operators and their per-site rates in [0, 1]
  std::uint64_t seed = 0;

  void validate() const;
  std::string describe() const;
};

struct MutationOutcome {
  SampleRecord sample;
  std::vector<std::string> notices;  // operators skipped for lack of a mutable site
};

/// Applies the enabled operators in a fixed order. The result gets a fresh
/// sha256 derived from its content and the mutation parameters.
MutationOutcome mutate(const SampleRecord& sample, const MutationSpec& spec);

// ---- synthetic base samples -----------------------------------------------

struct SyntheticSpec {
  std::size_t min_functions = 12;
  std::size_t max_functions = 60;
  std::size_t max_blocks = 24;
  std::size_t max_block_len = 14;
  // Bases whose overall opcode-category proportions are closer than this
  // (total variation) are redrawn, so distinct groups are really distinct.
  double min_mix_distance = 0.10;
  std::vector<std::string> orgs{"APT28", "APT29", "Lazarus", "Turla", "APT41", "OceanLotus", "Kimsuky", "MuddyWater"};
};

/// One synthetic x86-style sample with its own opcode mix and CFG shape.
SampleRecord synthesize_sample(std::uint64_t seed, const SyntheticSpec& spec = {});
/// Overall opcode-category proportions of a sample.
std::array<double, kNumCategories> category_mix(const SampleRecord& sample, const TaxonomyTable& taxonomy);
std::vector<SampleRecord> synthesize_corpus(std::size_t count, std::uint64_t seed, const SyntheticSpec& spec = {});

// ---- ground truth -----------------------------------------------------------

struct GroundTruthSpec {
  std::vector<std::size_t> group_sizes;  // duplicate groups, each >= 2 (base + mutants)
  std::size_t isolated = 0;              // singleton groups
  MutationSpec mutation;
};

struct LabeledCorpus {
  std::vector<SampleRecord> samples;
  std::vector<std::size_t> group;  // group id per sample; isolated samples have unique ids
  std::size_t duplicate_groups = 0;

  bool duplicate_pair(std::size_t i, std::size_t j) const { return group[i] == group[j]; }
  std::size_t positive_pairs() const;
};

/// Needs group_sizes.size() + isolated base samples.
LabeledCorpus build_ground_truth(const std::vector<SampleRecord>& bases, const GroundTruthSpec& spec);

/// `groups` sizes in [min_size, max_size] summing to `total` (heavy-tailed).
std::vector<std::size_t> draw_group_sizes(std::size_t groups, std::size_t total, std::size_t min_size,
                                          std::size_t max_size, std::uint64_t seed);

// ---- ablation ---------------------------------------------------------------

struct AblationConfig {
  std::string id;
  FeatureConfig features;
  SimilarityConfig similarity;
};

/// The 17-row configuration matrix (B1..H4).
const std::vector<AblationConfig>& ablation_matrix();
const AblationConfig& ablation_config(std::string_view id);

inline const std::vector<double> kDefaultThresholds{0.99, 0.999, 0.9999, 0.99999, 0.999999};

struct ThresholdMetrics {
  double threshold = 0.0;
  PairConfusion confusion;
};

struct AblationRow {
  std::string config_id;
  std::vector<ThresholdMetrics> metrics;
  std::size_t best = 0;  // index of the best-F1 threshold (ties: larger threshold)
  double wall_ms = 0.0;
  bool partial = false;  // some sample lacked loop depths for a Z configuration
};

/// Pairwise similarity of every sample pair under one configuration.
std::vector<LabeledScore> score_corpus(const LabeledCorpus& corpus, const AblationConfig& config,
                                       const TaxonomyTable& taxonomy, bool* partial = nullptr);

AblationRow evaluate_config(const LabeledCorpus& corpus, const AblationConfig& config,
                            const std::vector<double>& thresholds, const TaxonomyTable& taxonomy);

std::vector<AblationRow> run_ablation(const LabeledCorpus& corpus, const std::vector<AblationConfig>& configs,
                                      const std::vector<double>& thresholds, const TaxonomyTable& taxonomy);

/// CSV: config_id,threshold,tp,fp,tn,fn,precision,recall,f1,wall_ms
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace clarity::eval

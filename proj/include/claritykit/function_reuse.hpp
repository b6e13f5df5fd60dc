#pragma once

// Function reuse clusters (FRCs): near-identical functions grouped across
// samples by per-function hybrid similarity
//   Sim_struct = exp(-gamma * |V_struct,i - V_struct,j|^2)
//   Sim_sem    = Vhat_sem,i . Vhat_sem,j
//   Sim        = Sim_struct * Sim_sem
// with ANN candidate generation, exact re-scoring and union-find merging.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "claritykit/corpus.hpp"
#include "claritykit/features.hpp"

namespace clarity {

struct FunctionKey {
  std::string sample_sha256;
  std::string function_id;
  std::uint64_t start_address = 0;

  auto operator<=>(const FunctionKey&) const = default;
};

struct FunctionVectors {
  std::array<double, 2> v_struct{};       // raw (X, Y)
  std::array<double, 2> v_struct_unit{};  // L2-normalized copy
  std::array<double, kNumCategories> v_sem{};  // L2-normalized

  static FunctionVectors from(const OpcodeCfgVector& v);
};

/// Structured CFG and instruction summary carried for representatives.
struct FunctionSummary {
  std::vector<std::pair<std::uint64_t, std::uint32_t>> blocks;  // (id, instruction count)
  std::vector<Edge> edges;
  std::vector<std::string> asm_summary;

  static FunctionSummary from(const FunctionRecord& fn, std::size_t max_mnemonics = 64);
};

struct FunctionItem {
  FunctionKey key;
  FunctionVectors vectors;
  std::string org;
  std::size_t cfg_size = 0;
  FunctionSummary summary;
};

struct FunctionReuseCluster {
  std::string cluster_id;
  std::size_t size = 0;
  std::map<std::string, std::size_t> org_distribution;
  FunctionKey representative;
  FunctionSummary representative_summary;
  std::vector<FunctionKey> members;  // sorted
  bool cross_org = false;
};

struct AnnConfig {
  std::size_t k = 64;
  std::size_t max_rounds = 10;
  std::size_t nlist = 0;  // 0: ceil(sqrt(active set))
  std::size_t nprobe = 4;
  bool exhaustive = false;  // probe every list with k = active set size
  std::uint64_t seed = 0x5eed;
};

struct ClusterParams {
  double tau = 0.999;
  double gamma = 5.0;
  AnnConfig ann;
  std::size_t min_cluster_size = 2;
};

struct ClusteringResult {
  std::vector<FunctionReuseCluster> clusters;  // ordered by cluster_id
  std::vector<std::pair<std::size_t, std::size_t>> union_edges;  // item indices that triggered unions
  std::vector<std::size_t> clustered_per_round;  // items in non-singleton sets after each round
  std::size_t rounds = 0;
};

/// Drops functions with at most two basic blocks.
std::vector<FunctionRecord> filter_trivial(std::vector<FunctionRecord> fns);
inline bool is_trivial(const FunctionRecord& fn) noexcept { return fn.cfg_size() <= 2; }

double function_similarity(const FunctionVectors& f, const FunctionVectors& g, double gamma);

std::map<std::string, std::size_t> org_distribution(const std::vector<std::string>& member_orgs);

/// Search-and-prune clustering. Each round indexes the active set, queries
/// k neighbours per active item, re-scores candidates exactly and unions
/// pairs >= tau. Items whose clusters did not grow are settled and pruned;
/// saturated queries and one member per grown cluster stay active. Stops when
/// a round adds no union or after max_rounds.
ClusteringResult cluster_functions(const std::vector<FunctionItem>& items, const ClusterParams& params);

/// Stable cluster identifier: first 16 hex chars of SHA-256 over the sorted keys.
std::string cluster_id_for(std::vector<FunctionKey> members);

/// Builds FunctionItems for every non-trivial function of `sample`.
std::vector<FunctionItem> function_items(const SampleRecord& sample, const TaxonomyTable& taxonomy,
                                         const std::string& org, double c_offset = 0.0);

}  // namespace clarity

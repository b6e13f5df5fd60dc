#pragma once

// opcode_cfg feature extraction.
//
// Per function, edge-weighted aggregates over the CFG:
//   omega = sum_{(s,d) in E} (n_s + n_d)
//   X     = sum (n_s*id_s  + n_d*id_d)  / omega + c_offset
//   Y     = sum (n_s*deg_s + n_d*deg_d) / omega
//   Z     = sum (n_s*ldt_s + n_d*ldt_d) / omega         (optional)
//   W_k   = sum (f_{k,s} + f_{k,d})                      (k = 1..9)
// Function vectors are then propagated over the undirected call graph
// (Weisfeiler-Lehman style, sum aggregation) and summed into fixed-size
// per-sample vectors.

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "claritykit/corpus.hpp"
#include "claritykit/taxonomy.hpp"

namespace clarity {

enum class Representation : std::uint8_t { kNumerical, kStringHash };
enum class StructuralMode : std::uint8_t { kXY, kXYZ, kCentroid };

std::string_view to_string(Representation r) noexcept;
std::string_view to_string(StructuralMode m) noexcept;

struct FeatureConfig {
  double c_offset = 0.0;
  bool enable_z = false;
  bool enable_opcode_features = true;
  bool cfg_size_weighting = true;
  std::uint32_t wl_rounds = 1;
  Representation representation = Representation::kNumerical;
  StructuralMode structural_mode = StructuralMode::kXY;
  std::chrono::milliseconds z_timeout{2000};

  /// Throws std::invalid_argument on an inconsistent combination.
  void validate() const;
  /// Whether loop depths must be computed for this configuration.
  bool needs_loop_depth() const noexcept {
    return enable_z || structural_mode != StructuralMode::kXY;
  }
  /// Number of structural components per WL block (2 or 3).
  std::size_t struct_stride() const noexcept { return structural_mode == StructuralMode::kXY ? 2 : 3; }

  bool operator==(const FeatureConfig&) const = default;
};

struct OpcodeCfgVector {
  double x = 0.0;
  double y = 0.0;
  std::optional<double> z;
  std::array<double, kNumCategories> w{};
  double omega = 0.0;

  OpcodeCfgVector& operator+=(const OpcodeCfgVector& o);
  OpcodeCfgVector& operator*=(double k);
  bool operator==(const OpcodeCfgVector&) const = default;
};

/// WL-enhanced node feature: blocks[k] is the round-k vector, k = 0..h.
struct NodeFeature {
  std::vector<OpcodeCfgVector> blocks;
};

struct GlobalVectors {
  std::vector<double> v_sem;     // 9*(h+1), empty when opcode features are off
  std::vector<double> v_struct;  // stride*(h+1)
  std::size_t struct_stride = 2;

  bool operator==(const GlobalVectors&) const = default;
};

// ---- loop depth -----------------------------------------------------------

struct LoopDepths {
  std::vector<std::uint32_t> depth;  // aligned with cfg.blocks
  bool timed_out = false;
};

/// Natural-loop nesting depth per block from dominator-based back-edge
/// detection. Blocks unreachable from `entry` get depth 0. On timeout the
/// result has timed_out set and no depths.
LoopDepths loop_depth_analysis(const ControlFlowGraph& cfg, std::uint64_t entry,
                               std::chrono::nanoseconds timeout);

// ---- per-function / per-sample features -----------------------------------

/// Computes one function's opcode_cfg vector. The entry block is the first
/// block listed. `loop_depths` must be supplied when cfg.needs_loop_depth();
/// if it is null or timed out, z stays empty.
OpcodeCfgVector function_opcode_cfg(const FunctionRecord& fn, const TaxonomyTable& taxonomy,
                                    const FeatureConfig& cfg, const LoopDepths* loop_depths = nullptr);

/// Same, computing loop depths itself when the configuration needs them.
OpcodeCfgVector function_opcode_cfg(const FunctionRecord& fn, const TaxonomyTable& taxonomy,
                                    const FeatureConfig& cfg, bool* z_timed_out);

/// Per-function vectors aligned with sample.functions. Applies CFG_size
/// weighting, then h rounds of neighbour-sum propagation over the undirected
/// FCG (self-calls and duplicate edges ignored).
std::vector<NodeFeature> wl_propagate(const SampleRecord& sample, const std::vector<OpcodeCfgVector>& per_fn,
                                      const FeatureConfig& cfg);

/// Element-wise sum over nodes, block by block. Requires non-empty input.
GlobalVectors build_global_vectors(const std::vector<NodeFeature>& nodes, const FeatureConfig& cfg);

/// Bag of WL node labels: each node's configured components are serialized
/// canonically and hashed.
using LabelHistogram = std::map<std::uint64_t, double>;
LabelHistogram string_hash_features(const std::vector<NodeFeature>& nodes, const FeatureConfig& cfg);

double histogram_cosine(const LabelHistogram& a, const LabelHistogram& b);

/// Everything extraction produces for one sample.
struct SampleFeatures {
  std::string sha256;
  Date first_seen{};
  std::vector<OrgLabel> org_labels;
  std::vector<OpcodeCfgVector> functions;  // plain Eqs. 5-8 vectors, aligned with sample.functions
  GlobalVectors global;
  LabelHistogram histogram;                // filled for the string-hash representation
  bool z_fallback = false;                 // some function's loop analysis timed out
};

/// Full extraction for one sample. Metadata-only samples (no functions)
/// must be filtered out beforehand; throws std::invalid_argument otherwise.
SampleFeatures extract_sample(const SampleRecord& sample, const TaxonomyTable& taxonomy, const FeatureConfig& cfg);

}  // namespace clarity

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "claritykit/corpus.hpp"
#include "claritykit/features.hpp"
#include "claritykit/similarity.hpp"

namespace clarity {

struct DedupItem {
  std::string sha256;
  Date first_seen{};
  std::string label;  // used only when merging is restricted to one label
  GlobalVectors vectors;
};

struct LedgerEntry {
  std::string removed_hash;
  std::string representative_hash;
  double similarity = 0.0;  // direct score between the two, may be < tau when merged transitively
};

struct DuplicateCluster {
  std::string representative;
  std::vector<std::string> members;  // sorted, includes the representative
};

struct DuplicateClusters {
  std::vector<DuplicateCluster> clusters;  // one per component, singletons included; ordered by representative hash
  std::vector<LedgerEntry> ledger;         // ordered by removed hash
  std::size_t pairs_scored = 0;
};

struct DedupOptions {
  SimilarityConfig similarity;
  bool within_label = false;
  unsigned workers = 0;  // 0: hardware concurrency (CLARITY_WORKERS overrides)
};

/// Number of scoring threads for `requested` (0 = auto).
unsigned resolve_workers(unsigned requested);

/// Threshold-graph deduplication: every pair is scored, pairs with
/// similarity >= tau are unioned, and each connected component keeps the
/// member with the earliest first_seen (ties: smallest hash).
DuplicateClusters dedup(const std::vector<DedupItem>& items, const DedupOptions& options);

/// All pairs (i < j) with score >= tau, in (i, j) order.
struct ScoredPair {
  std::size_t i = 0, j = 0;
  double score = 0.0;
};
std::vector<ScoredPair> score_pairs_above(const std::vector<DedupItem>& items, const DedupOptions& options);

// ---- threshold calibration ------------------------------------------------

struct PairConfusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double precision() const noexcept { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const noexcept { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double f1() const noexcept {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

struct LabeledScore {
  double score = 0.0;
  bool duplicate = false;
};

PairConfusion confusion_at(const std::vector<LabeledScore>& pairs, double threshold);

struct Calibration {
  double tau = 1.0;
  PairConfusion confusion;
};

/// Chooses the threshold maximizing F1 subject to precision == 1.0 (zero
/// false merges). Candidates default to every distinct score; ties prefer the
/// larger threshold. Returns nullopt if no candidate yields a true positive
/// without a false one.
std::optional<Calibration> calibrate_threshold(const std::vector<LabeledScore>& pairs,
                                               std::vector<double> candidates = {});

}  // namespace clarity

#pragma once

// Dataset quality-control statistics.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "claritykit/corpus.hpp"

namespace clarity::qc {

inline constexpr const char* kUnknownLabel = "unknown";
inline constexpr double kGiniThreshold = 0.2;

using LabelCounts = std::map<std::string, std::uint64_t>;

/// G = 1 - sum p_i^2.
double gini_impurity(const LabelCounts& counts);

struct Consensus {
  double gini = 0.0;
  std::optional<std::string> label;  // empty means UNKNOWN
};

/// Majority label when G <= threshold and the majority is unique.
Consensus gini_consensus(const LabelCounts& counts, double threshold = kGiniThreshold);

/// Resolves one record's labels: distinct label strings are counted once per
/// (label, source) pair. Records with a single label pass through.
Consensus label_consensus(const std::vector<OrgLabel>& labels, double threshold = kGiniThreshold);

struct Diversity {
  std::size_t categories = 0;  // K, categories with positive count
  double entropy = 0.0;        // natural log
  double h_norm = 0.0;         // entropy / ln K, 0 for K = 1
  double hhi = 0.0;
};

/// Throws std::invalid_argument if no category has a positive count.
Diversity diversity(const LabelCounts& dist);

// ---- stratified sampling ---------------------------------------------------

/// Per-organization sample count from the tier rules:
///   <=5: all; 6-20: 50% (>=5); 21-100: 30% (>=10); 101-500: 15% (>=30);
///   >500: 8% clamped to [75, 120].
std::uint64_t tier_allocation(std::uint64_t org_size);

struct SamplingPlan {
  std::map<std::string, std::uint64_t> allocation;
  std::uint64_t seed = 0;
  std::uint64_t total() const noexcept;
};

SamplingPlan sampling_plan(const std::map<std::string, std::uint64_t>& org_sizes, std::uint64_t seed);

enum class Era : std::uint8_t { kBefore2015, k2015To2019, k2020On };
Era era_of(Date d) noexcept;

struct SamplingUnit {
  std::string sha256;
  std::string org;
  Date first_seen{};
};

/// Draws each organization's allocation stratified by first-seen era
/// (largest-remainder proportional split, seeded shuffle within each era).
/// Result: org -> selected hashes, sorted.
std::map<std::string, std::vector<std::string>> select_samples(const SamplingPlan& plan,
                                                               const std::vector<SamplingUnit>& units);

// ---- accuracy and agreement -----------------------------------------------

struct AccuracyReport {
  std::uint64_t n = 0;
  std::uint64_t s = 0;
  double confidence = 0.95;
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 1.0;
};

/// Exact binomial (Clopper-Pearson) interval from Beta quantiles.
AccuracyReport clopper_pearson(std::uint64_t successes, std::uint64_t trials, double confidence = 0.95);

/// Cohen's kappa for a square rater-A x rater-B contingency table.
double cohen_kappa(const std::vector<std::vector<double>>& table);

/// Fleiss' kappa; ratings[i][j] = raters assigning item i to category j.
/// Every item must have the same number (>= 2) of ratings.
double fleiss_kappa(const std::vector<std::vector<double>>& ratings);

}  // namespace clarity::qc

#pragma once

// Threat-actor alias knowledge base and name normalization.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "claritykit/corpus.hpp"

namespace clarity::alias {

inline constexpr double kAcceptThreshold = 0.95;
inline constexpr double kReviewThreshold = 0.80;

struct PreprocessRules {
  std::set<std::string> modifiers{"team", "group", "gang", "crew", "unit"};
  std::map<std::string, std::string> expansions;  // token -> replacement text

  static PreprocessRules from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// NFKC case-folding, punctuation to single spaces, whitespace collapse,
/// abbreviation expansion and modifier stripping. Idempotent.
std::string preprocess(std::string_view name, const PreprocessRules& rules = {});

/// Code-point edit distance.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
/// 1 - d / max(|a|, |b|); two empty strings score 1.
double levenshtein_ratio(std::string_view a, std::string_view b);
/// levenshtein_ratio over the space-joined sorted token lists.
double token_sort_ratio(std::string_view a, std::string_view b);

struct SourceRef {
  std::string name;
  double weight = 0.5;  // authority in [0, 1]
  bool operator==(const SourceRef&) const = default;
};

struct AliasEntry {
  std::string canonical_name;
  std::set<std::string> aliases;  // as recorded; always contains canonical_name
  std::vector<SourceRef> sources;
  Date last_updated{};

  double authority() const noexcept;
  bool operator==(const AliasEntry&) const = default;
};

enum class MatchStatus { kAccept, kReview, kNoMatch };
std::string_view to_string(MatchStatus s) noexcept;
MatchStatus status_for(double score) noexcept;

struct MatchResult {
  MatchStatus status = MatchStatus::kNoMatch;
  std::optional<AliasEntry> entry;
  double score = 0.0;
  std::optional<std::string> matched_alias;
};

class KnowledgeBase {
public:
  KnowledgeBase() = default;
  /// Strict: throws std::invalid_argument if any invariant fails (including
  /// an alias shared by two entries after preprocessing).
  KnowledgeBase(std::vector<AliasEntry> entries, PreprocessRules rules = {});

  /// Lenient: only per-entry checks; overlapping entries are allowed. Input
  /// for merge_entities.
  static KnowledgeBase raw(std::vector<AliasEntry> entries, PreprocessRules rules = {});

  static KnowledgeBase from_json(const nlohmann::json& j, bool strict = true);
  nlohmann::json to_json() const;
  static KnowledgeBase load(const std::filesystem::path& path, bool strict = true);
  void save(const std::filesystem::path& path) const;

  const std::vector<AliasEntry>& entries() const noexcept { return entries_; }
  const PreprocessRules& rules() const noexcept { return rules_; }

  MatchResult match(std::string_view name) const;

private:
  void build_index();

  std::vector<AliasEntry> entries_;
  PreprocessRules rules_;
  // (preprocessed alias, raw alias) per entry, aligned with entries_.
  std::vector<std::vector<std::pair<std::string, std::string>>> index_;
};

struct MergeConflict {
  std::string kind;  // "canonical_claim" or "alias_overlap"
  std::vector<std::string> canonical_names;
  std::string detail;
};

struct MergeResult {
  KnowledgeBase kb;
  std::vector<MergeConflict> conflicts;
};

inline constexpr double kDefaultJaccard = 0.5;
inline constexpr double kHighAuthority = 0.9;

/// Jaccard similarity of two alias sets after preprocessing.
double alias_jaccard(const AliasEntry& a, const AliasEntry& b, const PreprocessRules& rules = {});

/// Merges entries whose alias sets have Jaccard >= threshold (or share a
/// canonical name), repeating to a fixpoint. A merge that would put two
/// different canonical names backed by high-authority sources into one
/// entry is not done and is reported instead. Aliases still shared
/// afterwards are kept by one entry and reported.
MergeResult merge_entities(const KnowledgeBase& kb, double jaccard_threshold = kDefaultJaccard,
                           double high_authority = kHighAuthority);

struct ReviewItem {
  std::string sample_sha256;
  std::string label;
  std::string candidate;
  double score = 0.0;
  std::string matched_alias;
};

struct NormalizeReport {
  std::size_t accepted = 0;
  std::size_t review = 0;
  std::size_t no_match = 0;
  std::size_t unified_label_groups = 0;  // canonical names that absorbed >= 2 distinct raw labels
  std::size_t total() const noexcept { return accepted + review + no_match; }
};

struct NormalizeResult {
  std::vector<SampleRecord> samples;
  NormalizeReport report;
  std::vector<ReviewItem> review_queue;
};

/// Replaces every label that matches with ACCEPT by its canonical name.
NormalizeResult normalize_labels(std::vector<SampleRecord> samples, const KnowledgeBase& kb);

nlohmann::json to_json(const MatchResult& m);
nlohmann::json to_json(const ReviewItem& r);
nlohmann::json to_json(const NormalizeReport& r);

}  // namespace clarity::alias

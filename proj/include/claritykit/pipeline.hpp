#pragma once

// Stage runner: ingest -> normalize -> clean -> extract -> dedup ->
// funcluster -> qc. Each stage writes its outputs under
// <output_dir>/stages/<stage>-<key>/, where the key digests the stage input
// and parameters; a stage whose key directory is complete is not rerun.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "claritykit/alias.hpp"
#include "claritykit/config.hpp"
#include "claritykit/dedup.hpp"
#include "claritykit/function_reuse.hpp"
#include "claritykit/qc.hpp"

namespace clarity {

class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

struct StageRecord {
  std::string name;
  std::string status;  // "ok", "failed", "not_run"
  std::string key;
  std::string input_digest;
  std::map<std::string, std::string> outputs;  // file name -> sha256
  std::map<std::string, std::uint64_t> counts;
  std::string started;
  std::string finished;
  bool resumed = false;
  std::string error;
};

struct RunManifest {
  nlohmann::json parameters;
  std::vector<StageRecord> stages;
  std::string status;  // "ok" or "failed"
  std::string failed_stage;

  /// Timestamps and the resumed flag are omitted with `volatile_fields = false`.
  nlohmann::json to_json(bool volatile_fields = true) const;
};

inline const std::vector<std::string> kStageNames{"ingest", "normalize", "clean", "extract",
                                                  "dedup",  "funcluster", "qc"};

/// Runs every stage in order and writes <output_dir>/manifest.json. A stage
/// failure is recorded in the manifest (status "failed") and later stages
/// are marked not_run; the manifest is still written and returned.
RunManifest run_pipeline(const PipelineConfig& config);

// ---- output lines shared with the stage commands ---------------------------

nlohmann::json to_json(const DuplicateCluster& c);
nlohmann::json to_json(const LedgerEntry& e);
nlohmann::json to_json(const CollisionGroup& g);
nlohmann::json to_json(const FunctionReuseCluster& c);

/// Consensus relabeling used by the clean stage: a record whose labels reach
/// Gini consensus keeps the majority label (source "consensus"); otherwise
/// its label becomes "unknown".
void apply_label_consensus(SampleRecord& sample, double threshold);

struct QcSummary {
  std::map<std::string, std::uint64_t> org_sizes;
  std::optional<qc::Diversity> diversity;
  qc::SamplingPlan plan;
  std::map<std::string, std::vector<std::string>> selection;
};
QcSummary qc_summary(const std::vector<SampleRecord>& samples, std::uint64_t seed);
nlohmann::json to_json(const QcSummary& s);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace clarity

#pragma once

// Features file: line-delimited JSON. The first line is a header carrying
// the extraction configuration; each further line is one sample.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "claritykit/dedup.hpp"
#include "claritykit/features.hpp"
#include "claritykit/function_reuse.hpp"

namespace clarity {

struct FeatureRecord {
  std::string sha256;
  Date first_seen{};
  std::string label;  // consensus label, "unknown" if none
  std::vector<OrgLabel> org_labels;
  GlobalVectors global;
  LabelHistogram histogram;
  bool z_fallback = false;
  std::vector<FunctionItem> functions;  // non-trivial functions only

  bool operator==(const FeatureRecord&) const;
};

struct FeatureFile {
  FeatureConfig config;
  std::vector<FeatureRecord> records;
};

nlohmann::json feature_config_to_json(const FeatureConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
FeatureConfig feature_config_from_json(const nlohmann::json& j);

FeatureRecord make_feature_record(const SampleRecord& sample, const TaxonomyTable& taxonomy,
                                  const FeatureConfig& cfg);

void write_features(const std::filesystem::path& path, const FeatureFile& file);
FeatureFile read_features(const std::filesystem::path& path);

std::vector<DedupItem> dedup_items(const FeatureFile& file);
std::vector<FunctionItem> function_items(const FeatureFile& file);

}  // namespace clarity

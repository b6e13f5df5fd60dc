#pragma once

// Pipeline configuration. The file format is a TOML subset: [section] and
// [a.b] headers, `key = value` with strings, integers, floats, booleans and
// single-line arrays of those, and # comments.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "claritykit/features.hpp"
#include "claritykit/function_reuse.hpp"
#include "claritykit/similarity.hpp"

namespace clarity {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parses the TOML subset into a JSON object. Throws ConfigError with the
/// line number on malformed input or a repeated key.
nlohmann::json parse_toml_subset(std::string_view text);
nlohmann::json load_toml_subset(const std::filesystem::path& path);

struct PipelineConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> kb;
  std::string taxonomy = "x86";  // "x86", "managed" or a file path
  std::filesystem::path output_dir = "out";

  FeatureConfig features;
  SimilarityConfig similarity;
  bool within_label = false;
  ClusterParams funcluster;
  double gini_threshold = 0.2;
  std::uint64_t qc_seed = 0;

  /// Range checks plus existence of referenced files. Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;

  /// Relative paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
};

/// "x86" and "managed" name the built-in tables; anything else is a file.
TaxonomyTable resolve_taxonomy(const std::string& spec);

}  // namespace clarity

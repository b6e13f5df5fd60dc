#pragma once

// Interchange data model for disassembly exports.
//
// A SampleRecord is one binary as seen through its disassembler export:
// functions with basic-block CFGs, the function call graph, and the
// provenance metadata needed by the cleaning stages. Records are immutable
// once ingested; every invariant is checked by validate().

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace clarity {

inline constexpr int kSchemaVersion = 1;

using Date = std::chrono::year_month_day;

/// Thrown when an export fails schema or invariant validation. `where`
/// names the offending field path (e.g. "functions[2].edges[0]").
class SchemaError : public std::runtime_error {
public:
  SchemaError(std::string where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

private:
  std::string where_;
};

struct Instruction {
  std::string mnemonic;
  std::uint32_t operand_count = 0;
  // Operand text is optional and never feeds features; mutation operators
  // rewrite it.
  std::string operands;

  bool operator==(const Instruction&) const = default;
};

struct BasicBlock {
  std::uint64_t id = 0;
  std::vector<Instruction> instructions;
  std::optional<std::uint32_t> loop_depth;

  std::size_t size() const noexcept { return instructions.size(); }
  bool operator==(const BasicBlock&) const = default;
};

using Edge = std::pair<std::uint64_t, std::uint64_t>;

struct ControlFlowGraph {
  std::vector<BasicBlock> blocks;
  std::vector<Edge> edges;

  /// Index of the block with `id`, or npos.
  std::size_t index_of(std::uint64_t id) const noexcept;
  /// Out-degree per block, aligned with `blocks`.
  std::vector<std::uint32_t> out_degrees() const;

  bool operator==(const ControlFlowGraph&) const = default;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

struct FunctionRecord {
  std::string function_id;
  std::uint64_t start_address = 0;
  ControlFlowGraph cfg;

  std::size_t cfg_size() const noexcept { return cfg.blocks.size(); }
  bool operator==(const FunctionRecord&) const = default;
};

struct OrgLabel {
  std::string label;
  std::string source;
  bool operator==(const OrgLabel&) const = default;
};

struct SampleRecord {
  std::string sha256;
  std::vector<OrgLabel> org_labels;
  Date first_seen{};
  std::string file_type;
  std::optional<bool> packed;
  std::vector<FunctionRecord> functions;
  std::vector<std::pair<std::string, std::string>> fcg_edges;

  /// Documents and scripts are carried as metadata-only records.
  bool is_executable() const noexcept { return !functions.empty(); }
  bool operator==(const SampleRecord&) const = default;
};

// ---- validation / (de)serialization ---------------------------------------

bool is_sha256_hex(std::string_view s) noexcept;
Date parse_iso_date(std::string_view s);
std::string format_iso_date(Date d);
Date today_utc();

/// Checks every invariant of the data model; throws SchemaError.
void validate(const SampleRecord& sample);

SampleRecord sample_from_json(const nlohmann::json& j);
nlohmann::json sample_to_json(const SampleRecord& sample);

/// Canonical single-line serialization (stable key order).
std::string serialize_sample(const SampleRecord& sample);
SampleRecord parse_sample(std::string_view text);

/// Reads one export file (a single JSON document).
SampleRecord ingest_export(const std::filesystem::path& path);

/// Reads a corpus: a .jsonl file (one sample per line), a single .json
/// export, or a directory of exports (sorted by file name).
std::vector<SampleRecord> ingest_corpus(const std::filesystem::path& path);

void write_corpus(const std::filesystem::path& path, const std::vector<SampleRecord>& samples);

/// SHA-256 of the canonical serialization with the sha256 field blanked.
/// Used to re-derive identities for synthetic and mutated records.
std::string content_digest(const SampleRecord& sample);

// ---- exact-hash deduplication ---------------------------------------------

struct CollisionGroup {
  std::string sha256;
  std::size_t count = 0;
  std::vector<OrgLabel> org_labels;  // every label seen for this hash
  bool conflicting = false;          // more than one distinct label string
};

struct ExactDedupResult {
  std::vector<SampleRecord> kept;
  std::vector<CollisionGroup> collisions;
};

/// Collapses records sharing a sha256. The first occurrence is kept and
/// receives the union of all labels seen for its hash.
ExactDedupResult exact_hash_dedup(std::vector<SampleRecord> samples);

}  // namespace clarity

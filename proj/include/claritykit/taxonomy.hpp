#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "claritykit/corpus.hpp"

namespace clarity {

/// The nine semantic opcode categories, in feature order C1..C9.
enum class OpcodeCategory : std::uint8_t {
  kMemAccess = 0,
  kArithmeticLogic,
  kControlFlow,
  kLoadConstant,
  kObjectOriented,
  kTypeConversion,
  kStackOps,
  kMetadataReflection,
  kOtherIgnore,
};

inline constexpr std::size_t kNumCategories = 9;

using CategoryCounts = std::array<std::uint64_t, kNumCategories>;

std::string_view category_name(OpcodeCategory c) noexcept;
std::optional<OpcodeCategory> parse_category(std::string_view name) noexcept;

/// Mnemonic -> category map with a default for anything unlisted.
///
/// File format, one category per line (blank lines and '#' comments are
/// ignored, a line may be continued on the next one with a trailing '\'):
///
///   default = OTHER_IGNORE
///   MEM_ACCESS = mov movzx lea ...
///   CONTROL_FLOW = jmp call ret ...
class TaxonomyTable {
public:
  TaxonomyTable() = default;
  explicit TaxonomyTable(OpcodeCategory default_category) : default_(default_category) {}

  /// Adds or replaces a mapping. The mnemonic is case-folded.
  void assign(std::string mnemonic, OpcodeCategory category);

  OpcodeCategory classify(std::string_view mnemonic) const;
  OpcodeCategory default_category() const noexcept { return default_; }
  std::size_t size() const noexcept { return map_.size(); }

  static TaxonomyTable parse(std::string_view text);
  static TaxonomyTable load(const std::filesystem::path& path);

  /// Built-in tables; the same content ships under config/.
  static const TaxonomyTable& default_x86();
  static const TaxonomyTable& default_managed();

private:
  std::unordered_map<std::string, OpcodeCategory> map_;
  OpcodeCategory default_ = OpcodeCategory::kOtherIgnore;
};

/// Per-category instruction counts of one block; the entries sum to the
/// block's instruction count.
CategoryCounts block_category_counts(const BasicBlock& block, const TaxonomyTable& table);

}  // namespace clarity

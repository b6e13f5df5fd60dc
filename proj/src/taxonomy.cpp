#include "claritykit/taxonomy.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "builtin_taxonomies.hpp"

namespace clarity {

namespace {

constexpr std::array<std::string_view, kNumCategories> kNames = {
    "MEM_ACCESS",      "ARITHMETIC_LOGIC", "CONTROL_FLOW",        "LOAD_CONSTANT", "OBJECT_ORIENTED",
    "TYPE_CONVERSION", "STACK_OPS",        "METADATA_REFLECTION", "OTHER_IGNORE",
};

std::string fold(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view category_name(OpcodeCategory c) noexcept { return kNames[static_cast<std::size_t>(c)]; }

std::optional<OpcodeCategory> parse_category(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<OpcodeCategory>(i);
  return std::nullopt;
}

void TaxonomyTable::assign(std::string mnemonic, OpcodeCategory category) {
  map_[fold(mnemonic)] = category;
}

OpcodeCategory TaxonomyTable::classify(std::string_view mnemonic) const {
  auto it = map_.find(fold(mnemonic));
  return it == map_.end() ? default_ : it->second;
}

TaxonomyTable TaxonomyTable::parse(std::string_view text) {
  TaxonomyTable table;
  std::istringstream in{std::string(text)};
  std::string line, logical;
  std::size_t lineno = 0;
  auto flush = [&](std::size_t at) {
    const std::string held = std::move(logical);
    logical.clear();
    auto body = trim(held);
    if (body.empty()) return;
    auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw std::runtime_error("taxonomy line " + std::to_string(at) + ": expected 'CATEGORY = mnemonics'");
    auto key = trim(body.substr(0, eq));
    auto values = trim(body.substr(eq + 1));
    if (key == "default") {
      auto c = parse_category(values);
      if (!c) throw std::runtime_error("taxonomy line " + std::to_string(at) + ": unknown category '" +
                                       std::string(values) + "'");
      table.default_ = *c;
      return;
    }
    auto c = parse_category(key);
    if (!c)
      throw std::runtime_error("taxonomy line " + std::to_string(at) + ": unknown category '" + std::string(key) + "'");
    std::istringstream words{std::string(values)};
    std::string w;
    while (words >> w) table.assign(w, *c);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto t = trim(line);
    if (!t.empty() && t.back() == '\\') {
      logical.append(t.substr(0, t.size() - 1)).push_back(' ');
      continue;
    }
    logical.append(t);
    flush(lineno);
  }
  flush(lineno);
  return table;
}

TaxonomyTable TaxonomyTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open taxonomy " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const TaxonomyTable& TaxonomyTable::default_x86() {
  static const TaxonomyTable t = parse(builtin::kTaxonomyX86);
  return t;
}

const TaxonomyTable& TaxonomyTable::default_managed() {
  static const TaxonomyTable t = parse(builtin::kTaxonomyManaged);
  return t;
}

CategoryCounts block_category_counts(const BasicBlock& block, const TaxonomyTable& table) {
  CategoryCounts counts{};
  for (const auto& in : block.instructions) ++counts[static_cast<std::size_t>(table.classify(in.mnemonic))];
  return counts;
}

}  // namespace clarity

#pragma once

#include <random>
#include <string>
#include <vector>

#include "claritykit/corpus.hpp"
#include "claritykit/digest.hpp"

namespace fx {

using namespace clarity;

inline BasicBlock block(std::uint64_t id, std::vector<std::string> mnemonics) {
  BasicBlock b;
  b.id = id;
  for (auto& m : mnemonics) b.instructions.push_back({std::move(m), 0, ""});
  return b;
}

inline FunctionRecord function(std::string id, std::uint64_t addr, std::vector<BasicBlock> blocks,
                               std::vector<Edge> edges = {}) {
  FunctionRecord f;
  f.function_id = std::move(id);
  f.start_address = addr;
  f.cfg.blocks = std::move(blocks);
  f.cfg.edges = std::move(edges);
  return f;
}

inline std::string hash_of(const std::string& seed) { return sha256_hex(seed); }

inline SampleRecord sample(const std::string& seed, std::vector<FunctionRecord> fns,
                           std::vector<std::pair<std::string, std::string>> fcg = {},
                           std::string label = "APT28") {
  SampleRecord s;
  s.sha256 = hash_of(seed);
  s.org_labels = {{std::move(label), "vendor"}};
  s.first_seen = Date{std::chrono::year{2018}, std::chrono::month{3}, std::chrono::day{14}};
  s.file_type = "PE32";
  s.functions = std::move(fns);
  s.fcg_edges = std::move(fcg);
  return s;
}

// b1(id=1, [mov, add]) -> b2(id=2, [jmp])
inline FunctionRecord mov_add_jmp_fixture() {
  return function("f", 0x1000, {block(1, {"mov", "add"}), block(2, {"jmp"})}, {{1, 2}});
}

}  // namespace fx

#include "claritykit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "claritykit/digest.hpp"

namespace clarity {

using nlohmann::json;

namespace {

std::string lower_ascii(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path, "expected object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "." + key, "missing field");
  return *it;
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError(path, "expected string");
  return v.get<std::string>();
}

std::uint64_t get_uint(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw SchemaError(path, "expected nonnegative integer");
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  auto i = v.get<std::int64_t>();
  if (i < 0) throw SchemaError(path, "expected nonnegative integer");
  return static_cast<std::uint64_t>(i);
}

const json& get_array(const json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path, "expected array");
  return v;
}

std::string idx(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

}  // namespace

std::size_t ControlFlowGraph::index_of(std::uint64_t id) const noexcept {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].id == id) return i;
  return npos;
}

std::vector<std::uint32_t> ControlFlowGraph::out_degrees() const {
  std::unordered_map<std::uint64_t, std::size_t> pos;
  pos.reserve(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) pos.emplace(blocks[i].id, i);
  std::vector<std::uint32_t> deg(blocks.size(), 0);
  for (const auto& [s, d] : edges) {
    auto it = pos.find(s);
    if (it != pos.end()) ++deg[it->second];
  }
  return deg;
}

bool is_sha256_hex(std::string_view s) noexcept {
  if (s.size() != 64) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
  });
}

Date parse_iso_date(std::string_view s) {
  // YYYY-MM-DD, optionally followed by a time part which is ignored.
  auto bad = [&] { return SchemaError("first_seen", "not an ISO-8601 date: '" + std::string(s) + "'"); };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') throw bad();
  if (s.size() > 10 && s[10] != 'T' && s[10] != ' ') throw bad();
  int y = 0;
  unsigned m = 0, d = 0;
  auto parse = [&](std::size_t off, std::size_t len, auto& out) {
    auto r = std::from_chars(s.data() + off, s.data() + off + len, out);
    if (r.ec != std::errc{} || r.ptr != s.data() + off + len) throw bad();
  };
  parse(0, 4, y);
  parse(5, 2, m);
  parse(8, 2, d);
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw bad();
  return date;
}

std::string format_iso_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

Date today_utc() {
  return Date{std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now())};
}

void validate(const SampleRecord& s) {
  if (!is_sha256_hex(s.sha256)) throw SchemaError("sha256", "malformed hash '" + s.sha256 + "'");
  using namespace std::chrono;
  const Date lo{year{1990}, January, day{1}};
  if (!s.first_seen.ok() || sys_days{s.first_seen} < sys_days{lo} ||
      sys_days{s.first_seen} > sys_days{today_utc()})
    throw SchemaError("first_seen", "outside [1990-01-01, today]");
  for (std::size_t i = 0; i < s.org_labels.size(); ++i)
    if (s.org_labels[i].label.empty()) throw SchemaError(idx("org_labels", i), "empty label");

  std::unordered_set<std::string> fn_ids;
  std::unordered_set<std::uint64_t> starts;
  for (std::size_t fi = 0; fi < s.functions.size(); ++fi) {
    const auto& fn = s.functions[fi];
    const auto fpath = idx("functions", fi);
    if (fn.function_id.empty()) throw SchemaError(fpath + ".function_id", "empty");
    if (!fn_ids.insert(fn.function_id).second)
      throw SchemaError(fpath + ".function_id", "duplicate function_id '" + fn.function_id + "'");
    if (!starts.insert(fn.start_address).second)
      throw SchemaError(fpath + ".start_address", "duplicate start_address");
    if (fn.cfg.blocks.empty()) throw SchemaError(fpath + ".blocks", "function has no basic blocks");

    std::unordered_set<std::uint64_t> block_ids;
    for (std::size_t bi = 0; bi < fn.cfg.blocks.size(); ++bi) {
      const auto& b = fn.cfg.blocks[bi];
      const auto bpath = idx(fpath + ".blocks", bi);
      if (!block_ids.insert(b.id).second) throw SchemaError(bpath + ".id", "duplicate block id");
      for (std::size_t ii = 0; ii < b.instructions.size(); ++ii) {
        const auto& m = b.instructions[ii].mnemonic;
        const auto ipath = idx(bpath + ".instructions", ii) + ".mnemonic";
        if (m.empty()) throw SchemaError(ipath, "empty mnemonic");
        if (std::any_of(m.begin(), m.end(), [](unsigned char c) { return std::isspace(c); }))
          throw SchemaError(ipath, "whitespace in mnemonic '" + m + "'");
      }
    }
    for (std::size_t ei = 0; ei < fn.cfg.edges.size(); ++ei) {
      const auto& [src, dst] = fn.cfg.edges[ei];
      if (!block_ids.count(src) || !block_ids.count(dst))
        throw SchemaError(idx(fpath + ".edges", ei), "dangling edge (" + std::to_string(src) + "," +
                                                          std::to_string(dst) + ")");
    }
  }
  for (std::size_t ei = 0; ei < s.fcg_edges.size(); ++ei) {
    const auto& [caller, callee] = s.fcg_edges[ei];
    if (!fn_ids.count(caller) || !fn_ids.count(callee))
      throw SchemaError(idx("fcg_edges", ei), "dangling call edge (" + caller + "," + callee + ")");
  }
}

SampleRecord sample_from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("$", "expected object");
  const auto& ver = require(j, "schema_version", "$");
  if (!ver.is_number_integer() || ver.get<int>() != kSchemaVersion)
    throw SchemaError("schema_version", "unsupported schema version " + ver.dump());

  SampleRecord s;
  s.sha256 = lower_ascii(get_string(require(j, "sha256", "$"), "sha256"));
  if (!is_sha256_hex(s.sha256)) throw SchemaError("sha256", "malformed hash '" + s.sha256 + "'");

  const auto& labels = get_array(require(j, "org_labels", "$"), "org_labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto p = idx("org_labels", i);
    if (!labels[i].is_array() || labels[i].size() != 2) throw SchemaError(p, "expected [label, source]");
    s.org_labels.push_back({get_string(labels[i][0], p + "[0]"), get_string(labels[i][1], p + "[1]")});
  }
  s.first_seen = parse_iso_date(get_string(require(j, "first_seen", "$"), "first_seen"));
  s.file_type = get_string(require(j, "file_type", "$"), "file_type");
  if (auto it = j.find("packed"); it != j.end() && !it->is_null()) {
    if (!it->is_boolean()) throw SchemaError("packed", "expected boolean or null");
    s.packed = it->get<bool>();
  }

  const auto& fns = get_array(require(j, "functions", "$"), "functions");
  s.functions.reserve(fns.size());
  for (std::size_t fi = 0; fi < fns.size(); ++fi) {
    const auto fpath = idx("functions", fi);
    const auto& fj = fns[fi];
    FunctionRecord fn;
    fn.function_id = get_string(require(fj, "function_id", fpath), fpath + ".function_id");
    fn.start_address = get_uint(require(fj, "start_address", fpath), fpath + ".start_address");
    const auto declared_size = get_uint(require(fj, "cfg_size", fpath), fpath + ".cfg_size");

    const auto& blocks = get_array(require(fj, "blocks", fpath), fpath + ".blocks");
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const auto bpath = idx(fpath + ".blocks", bi);
      BasicBlock b;
      b.id = get_uint(require(blocks[bi], "id", bpath), bpath + ".id");
      const auto& ins = get_array(require(blocks[bi], "instructions", bpath), bpath + ".instructions");
      b.instructions.reserve(ins.size());
      for (std::size_t ii = 0; ii < ins.size(); ++ii) {
        const auto ipath = idx(bpath + ".instructions", ii);
        Instruction in;
        in.mnemonic = lower_ascii(get_string(require(ins[ii], "mnemonic", ipath), ipath + ".mnemonic"));
        if (auto it = ins[ii].find("operand_count"); it != ins[ii].end())
          in.operand_count = static_cast<std::uint32_t>(get_uint(*it, ipath + ".operand_count"));
        if (auto it = ins[ii].find("operands"); it != ins[ii].end())
          in.operands = get_string(*it, ipath + ".operands");
        b.instructions.push_back(std::move(in));
      }
      if (auto it = blocks[bi].find("loop_depth"); it != blocks[bi].end() && !it->is_null())
        b.loop_depth = static_cast<std::uint32_t>(get_uint(*it, bpath + ".loop_depth"));
      fn.cfg.blocks.push_back(std::move(b));
    }
    if (declared_size != fn.cfg.blocks.size())
      throw SchemaError(fpath + ".cfg_size", "cfg_size " + std::to_string(declared_size) +
                                                 " != block count " + std::to_string(fn.cfg.blocks.size()));
    const auto& edges = get_array(require(fj, "edges", fpath), fpath + ".edges");
    for (std::size_t ei = 0; ei < edges.size(); ++ei) {
      const auto epath = idx(fpath + ".edges", ei);
      if (!edges[ei].is_array() || edges[ei].size() != 2) throw SchemaError(epath, "expected [s, d]");
      fn.cfg.edges.emplace_back(get_uint(edges[ei][0], epath + "[0]"), get_uint(edges[ei][1], epath + "[1]"));
    }
    s.functions.push_back(std::move(fn));
  }

  const auto& calls = get_array(require(j, "fcg_edges", "$"), "fcg_edges");
  for (std::size_t i = 0; i < calls.size(); ++i) {
    const auto p = idx("fcg_edges", i);
    if (!calls[i].is_array() || calls[i].size() != 2) throw SchemaError(p, "expected [caller, callee]");
    s.fcg_edges.emplace_back(get_string(calls[i][0], p + "[0]"), get_string(calls[i][1], p + "[1]"));
  }

  validate(s);
  return s;
}

json sample_to_json(const SampleRecord& s) {
  // nlohmann::json objects are key-sorted, which gives a canonical form.
  json j;
  j["schema_version"] = kSchemaVersion;
  j["sha256"] = s.sha256;
  j["org_labels"] = json::array();
  for (const auto& l : s.org_labels) j["org_labels"].push_back({l.label, l.source});
  j["first_seen"] = format_iso_date(s.first_seen);
  j["file_type"] = s.file_type;
  j["packed"] = s.packed ? json(*s.packed) : json(nullptr);
  j["functions"] = json::array();
  for (const auto& fn : s.functions) {
    json fj;
    fj["function_id"] = fn.function_id;
    fj["start_address"] = fn.start_address;
    fj["cfg_size"] = fn.cfg_size();
    fj["blocks"] = json::array();
    for (const auto& b : fn.cfg.blocks) {
      json bj;
      bj["id"] = b.id;
      bj["instructions"] = json::array();
      for (const auto& in : b.instructions) {
        json ij{{"mnemonic", in.mnemonic}, {"operand_count", in.operand_count}};
        if (!in.operands.empty()) ij["operands"] = in.operands;
        bj["instructions"].push_back(std::move(ij));
      }
      if (b.loop_depth) bj["loop_depth"] = *b.loop_depth;
      fj["blocks"].push_back(std::move(bj));
    }
    fj["edges"] = json::array();
    for (const auto& [src, dst] : fn.cfg.edges) fj["edges"].push_back({src, dst});
    j["functions"].push_back(std::move(fj));
  }
  j["fcg_edges"] = json::array();
  for (const auto& [a, b] : s.fcg_edges) j["fcg_edges"].push_back({a, b});
  return j;
}

std::string serialize_sample(const SampleRecord& s) { return sample_to_json(s).dump(); }

SampleRecord parse_sample(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("parse error: ") + e.what());
  }
  return sample_from_json(j);
}

SampleRecord ingest_export(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open export " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_sample(buf.str());
  } catch (const SchemaError& e) {
    throw SchemaError(path.filename().string() + ":" + e.where(), e.what());
  }
}

std::vector<SampleRecord> ingest_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<SampleRecord> out;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && (e.path().extension() == ".json" || e.path().extension() == ".jsonl"))
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto part = ingest_corpus(f);
      std::move(part.begin(), part.end(), std::back_inserter(out));
    }
    return out;
  }
  if (path.extension() != ".jsonl") {
    out.push_back(ingest_export(path));
    return out;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_sample(line));
    } catch (const SchemaError& e) {
      throw SchemaError(path.filename().string() + ":" + std::to_string(lineno) + ":" + e.where(), e.what());
    }
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<SampleRecord>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& s : samples) out << serialize_sample(s) << '\n';
}

std::string content_digest(const SampleRecord& sample) {
  auto j = sample_to_json(sample);
  j.erase("sha256");
  return sha256_hex(j.dump());
}

ExactDedupResult exact_hash_dedup(std::vector<SampleRecord> samples) {
  ExactDedupResult r;
  std::unordered_map<std::string, std::size_t> first;  // sha256 -> index into kept
  std::vector<std::size_t> counts;
  for (auto& s : samples) {
    auto [it, fresh] = first.emplace(s.sha256, r.kept.size());
    if (fresh) {
      counts.push_back(1);
      r.kept.push_back(std::move(s));
      continue;
    }
    auto& kept = r.kept[it->second];
    ++counts[it->second];
    for (auto& l : s.org_labels)
      if (std::find(kept.org_labels.begin(), kept.org_labels.end(), l) == kept.org_labels.end())
        kept.org_labels.push_back(std::move(l));
  }
  for (std::size_t i = 0; i < r.kept.size(); ++i) {
    if (counts[i] < 2) continue;
    CollisionGroup g;
    g.sha256 = r.kept[i].sha256;
    g.count = counts[i];
    g.org_labels = r.kept[i].org_labels;
    std::set<std::string> distinct;
    for (const auto& l : g.org_labels) distinct.insert(l.label);
    g.conflicting = distinct.size() > 1;
    r.collisions.push_back(std::move(g));
  }
  return r;
}

}  // namespace clarity

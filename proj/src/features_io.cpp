#include "claritykit/features_io.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "claritykit/qc.hpp"

namespace clarity {

using nlohmann::json;

bool FeatureRecord::operator==(const FeatureRecord& o) const {
  if (sha256 != o.sha256 || first_seen != o.first_seen || label != o.label || org_labels != o.org_labels ||
      global != o.global || histogram != o.histogram || z_fallback != o.z_fallback ||
      functions.size() != o.functions.size())
    return false;
  for (std::size_t i = 0; i < functions.size(); ++i) {
    const auto &a = functions[i], &b = o.functions[i];
    if (a.key != b.key || a.org != b.org || a.cfg_size != b.cfg_size || a.vectors.v_struct != b.vectors.v_struct ||
        a.vectors.v_struct_unit != b.vectors.v_struct_unit || a.vectors.v_sem != b.vectors.v_sem ||
        a.summary.blocks != b.summary.blocks || a.summary.edges != b.summary.edges ||
        a.summary.asm_summary != b.summary.asm_summary)
      return false;
  }
  return true;
}

json feature_config_to_json(const FeatureConfig& cfg) {
  return json{{"c_offset", cfg.c_offset},
              {"enable_z", cfg.enable_z},
              {"enable_opcode_features", cfg.enable_opcode_features},
              {"cfg_size_weighting", cfg.cfg_size_weighting},
              {"wl_rounds", cfg.wl_rounds},
              {"representation", std::string(to_string(cfg.representation))},
              {"structural_mode", std::string(to_string(cfg.structural_mode))},
              {"z_timeout_ms", cfg.z_timeout.count()}};
}

FeatureConfig feature_config_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("feature config must be an object");
  FeatureConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "c_offset") cfg.c_offset = v.get<double>();
    else if (key == "enable_z") cfg.enable_z = v.get<bool>();
    else if (key == "enable_opcode_features") cfg.enable_opcode_features = v.get<bool>();
    else if (key == "cfg_size_weighting") cfg.cfg_size_weighting = v.get<bool>();
    else if (key == "wl_rounds") cfg.wl_rounds = v.get<std::uint32_t>();
    else if (key == "z_timeout_ms") cfg.z_timeout = std::chrono::milliseconds(v.get<std::int64_t>());
    else if (key == "representation") {
      const auto s = v.get<std::string>();
      if (s == to_string(Representation::kNumerical)) cfg.representation = Representation::kNumerical;
      else if (s == to_string(Representation::kStringHash)) cfg.representation = Representation::kStringHash;
      else throw std::invalid_argument("unknown representation '" + s + "'");
    } else if (key == "structural_mode") {
      const auto s = v.get<std::string>();
      if (s == to_string(StructuralMode::kXY)) cfg.structural_mode = StructuralMode::kXY;
      else if (s == to_string(StructuralMode::kXYZ)) cfg.structural_mode = StructuralMode::kXYZ;
      else if (s == to_string(StructuralMode::kCentroid)) cfg.structural_mode = StructuralMode::kCentroid;
      else throw std::invalid_argument("unknown structural_mode '" + s + "'");
    } else {
      throw std::invalid_argument("unknown feature config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

FeatureRecord make_feature_record(const SampleRecord& sample, const TaxonomyTable& taxonomy,
                                  const FeatureConfig& cfg) {
  auto sf = extract_sample(sample, taxonomy, cfg);
  FeatureRecord r;
  r.sha256 = sample.sha256;
  r.first_seen = sample.first_seen;
  r.org_labels = sample.org_labels;
  r.label = qc::label_consensus(sample.org_labels).label.value_or(qc::kUnknownLabel);
  r.global = std::move(sf.global);
  r.histogram = std::move(sf.histogram);
  r.z_fallback = sf.z_fallback;
  r.functions = function_items(sample, taxonomy, r.label, cfg.c_offset);
  return r;
}

namespace {

json record_to_json(const FeatureRecord& r) {
  json labels = json::array();
  for (const auto& l : r.org_labels) labels.push_back({l.label, l.source});
  json hist = json::array();
  for (const auto& [k, v] : r.histogram) hist.push_back({k, v});
  json fns = json::array();
  for (const auto& f : r.functions) {
    json blocks = json::array(), edges = json::array();
    for (const auto& [id, n] : f.summary.blocks) blocks.push_back({id, n});
    for (const auto& [s, d] : f.summary.edges) edges.push_back({s, d});
    fns.push_back({{"function_id", f.key.function_id},
                   {"start_address", f.key.start_address},
                   {"cfg_size", f.cfg_size},
                   {"v_struct", f.vectors.v_struct},
                   {"v_struct_unit", f.vectors.v_struct_unit},
                   {"v_sem", f.vectors.v_sem},
                   {"cfg", {{"blocks", blocks}, {"edges", edges}}},
                   {"asm_summary", f.summary.asm_summary}});
  }
  return json{{"sha256", r.sha256},
              {"first_seen", format_iso_date(r.first_seen)},
              {"label", r.label},
              {"org_labels", labels},
              {"v_sem", r.global.v_sem},
              {"v_struct", r.global.v_struct},
              {"struct_stride", r.global.struct_stride},
              {"histogram", hist},
              {"z_fallback", r.z_fallback},
              {"functions", fns}};
}

FeatureRecord record_from_json(const json& j) {
  FeatureRecord r;
  r.sha256 = j.at("sha256").get<std::string>();
  if (!is_sha256_hex(r.sha256)) throw SchemaError("sha256", "not a lowercase 64-hex digest");
  r.first_seen = parse_iso_date(j.at("first_seen").get<std::string>());
  r.label = j.at("label").get<std::string>();
  for (const auto& l : j.at("org_labels")) r.org_labels.push_back({l.at(0).get<std::string>(), l.at(1).get<std::string>()});
  r.global.v_sem = j.at("v_sem").get<std::vector<double>>();
  r.global.v_struct = j.at("v_struct").get<std::vector<double>>();
  r.global.struct_stride = j.at("struct_stride").get<std::size_t>();
  for (const auto& h : j.at("histogram")) r.histogram[h.at(0).get<std::uint64_t>()] = h.at(1).get<double>();
  r.z_fallback = j.value("z_fallback", false);
  for (const auto& f : j.at("functions")) {
    FunctionItem item;
    item.key = {r.sha256, f.at("function_id").get<std::string>(), f.at("start_address").get<std::uint64_t>()};
    item.cfg_size = f.at("cfg_size").get<std::size_t>();
    item.vectors.v_struct = f.at("v_struct").get<std::array<double, 2>>();
    item.vectors.v_struct_unit = f.at("v_struct_unit").get<std::array<double, 2>>();
    item.vectors.v_sem = f.at("v_sem").get<std::array<double, kNumCategories>>();
    for (const auto& b : f.at("cfg").at("blocks"))
      item.summary.blocks.emplace_back(b.at(0).get<std::uint64_t>(), b.at(1).get<std::uint32_t>());
    for (const auto& e : f.at("cfg").at("edges")) item.summary.edges.emplace_back(e.at(0).get<std::uint64_t>(), e.at(1).get<std::uint64_t>());
    item.summary.asm_summary = f.at("asm_summary").get<std::vector<std::string>>();
    item.org = r.label;
    r.functions.push_back(std::move(item));
  }
  return r;
}

}  // namespace

void write_features(const std::filesystem::path& path, const FeatureFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json{{"kind", "features"}, {"schema_version", kSchemaVersion}, {"config", feature_config_to_json(file.config)}}.dump()
      << '\n';
  for (const auto& r : file.records) out << record_to_json(r).dump() << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

FeatureFile read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  FeatureFile file;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      if (!header) {
        if (j.value("kind", "") != "features") throw std::invalid_argument("missing features header");
        file.config = feature_config_from_json(j.at("config"));
        header = true;
        continue;
      }
      auto r = record_from_json(j);
      if (!seen.insert(r.sha256).second) throw std::invalid_argument("duplicate sha256 " + r.sha256);
      file.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw std::runtime_error(path.string() + ": empty features file");
  return file;
}

std::vector<DedupItem> dedup_items(const FeatureFile& file) {
  std::vector<DedupItem> items;
  items.reserve(file.records.size());
  for (const auto& r : file.records) items.push_back({r.sha256, r.first_seen, r.label, r.global});
  return items;
}

std::vector<FunctionItem> function_items(const FeatureFile& file) {
  std::vector<FunctionItem> items;
  for (const auto& r : file.records) items.insert(items.end(), r.functions.begin(), r.functions.end());
  return items;
}

}  // namespace clarity

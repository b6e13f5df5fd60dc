#include "claritykit/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "claritykit/features_io.hpp"

namespace clarity {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

class ValueParser {
public:
  ValueParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  json parse_all() {
    auto v = value();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters after value");
    return v;
  }

private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return basic_string();
    if (c == '\'') return literal_string();
    if (c == '[') return array();
    if (s_.substr(pos_, 4) == "true") {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_, 5) == "false") {
      pos_ += 5;
      return false;
    }
    return number();
  }
  json basic_string() {
    std::string out;
    for (++pos_; pos_ < s_.size(); ++pos_) {
      const char c = s_[pos_];
      if (c == '"') {
        ++pos_;
        return out;
      }
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (++pos_ >= s_.size()) break;
      switch (s_[pos_]) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: fail("unsupported escape");
      }
    }
    fail("unterminated string");
  }
  json literal_string() {
    const auto end = s_.find('\'', pos_ + 1);
    if (end == std::string_view::npos) fail("unterminated string");
    std::string out(s_.substr(pos_ + 1, end - pos_ - 1));
    pos_ = end + 1;
    return out;
  }
  json array() {
    json arr = json::array();
    ++pos_;
    for (;;) {
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(value());
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }
  json number() {
    std::size_t end = pos_;
    while (end < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[end])) || std::strchr("+-._", s_[end]))) ++end;
    std::string tok;
    for (char c : s_.substr(pos_, end - pos_))
      if (c != '_') tok.push_back(c);
    pos_ = end;
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos && tok.rfind("0x", 0) != 0;
    if (is_float) {
      std::size_t used = 0;
      double d = 0;
      try {
        d = std::stod(tok, &used);
      } catch (const std::exception&) {
        fail("bad number '" + tok + "'");
      }
      if (used != tok.size()) fail("bad number '" + tok + "'");
      return d;
    }
    std::int64_t v = 0;
    const char* b = tok.data();
    const char* e = tok.data() + tok.size();
    int base = 10;
    if (tok.rfind("0x", 0) == 0) {
      b += 2;
      base = 16;
    } else if (*b == '+') {
      ++b;
    }
    auto [p, ec] = std::from_chars(b, e, v, base);
    if (ec != std::errc{} || p != e) fail("bad value '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

// Strips a # comment that is not inside a string.
std::string_view strip_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

json parse_toml_subset(std::string_view text) {
  json root = json::object();
  json* table = &root;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) throw ConfigError("config line " + std::to_string(lineno) + ": bad table header");
      table = &root;
      std::string_view name = trim(line.substr(1, line.size() - 2));
      while (!name.empty()) {
        const auto dot = name.find('.');
        const auto part = trim(name.substr(0, dot));
        if (!bare_key(part)) throw ConfigError("config line " + std::to_string(lineno) + ": bad table name");
        auto& next = (*table)[std::string(part)];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ConfigError("config line " + std::to_string(lineno) + ": '" + std::string(part) + "' is not a table");
        table = &next;
        name = dot == std::string_view::npos ? std::string_view{} : name.substr(dot + 1);
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (!bare_key(key)) throw ConfigError("config line " + std::to_string(lineno) + ": bad key '" + key + "'");
    if (table->contains(key)) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    (*table)[key] = ValueParser(line.substr(eq + 1), lineno).parse_all();
  }
  return root;
}

json load_toml_subset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_toml_subset(buf.str());
}

TaxonomyTable resolve_taxonomy(const std::string& spec) {
  if (spec == "x86") return TaxonomyTable::default_x86();
  if (spec == "managed") return TaxonomyTable::default_managed();
  return TaxonomyTable::load(spec);
}

namespace {

void check_keys(const json& t, const std::string& section, std::initializer_list<std::string_view> allowed) {
  if (!t.is_object()) throw ConfigError("[" + section + "] must be a table");
  for (const auto& [k, v] : t.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ConfigError("unknown key '" + k + "' in [" + section + "]");
}

template <class T>
T get(const json& t, const char* key, T fallback, const std::string& section) {
  if (!t.contains(key)) return fallback;
  try {
    return t.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("wrong type for ") + section + "." + key);
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  PipelineConfig c;
  check_keys(j, "root", {"paths", "features", "similarity", "dedup", "funcluster", "qc"});
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  const json empty = json::object();
  const auto& paths = j.contains("paths") ? j.at("paths") : empty;
  check_keys(paths, "paths", {"corpus", "kb", "taxonomy", "output_dir"});
  if (!paths.contains("corpus")) throw ConfigError("paths.corpus is required");
  c.corpus = resolve(get<std::string>(paths, "corpus", "", "paths"));
  if (paths.contains("kb")) c.kb = resolve(get<std::string>(paths, "kb", "", "paths"));
  c.taxonomy = get<std::string>(paths, "taxonomy", c.taxonomy, "paths");
  if (c.taxonomy != "x86" && c.taxonomy != "managed") c.taxonomy = resolve(c.taxonomy).string();
  c.output_dir = resolve(get<std::string>(paths, "output_dir", c.output_dir.string(), "paths"));

  if (j.contains("features")) {
    try {
      c.features = feature_config_from_json(j.at("features"));
    } catch (const std::exception& e) {
      throw ConfigError(std::string("[features]: ") + e.what());
    }
  }
  if (j.contains("similarity")) {
    const auto& s = j.at("similarity");
    check_keys(s, "similarity", {"tau", "gamma", "metric"});
    c.similarity.tau = get<double>(s, "tau", c.similarity.tau, "similarity");
    c.similarity.gamma = get<double>(s, "gamma", c.similarity.gamma, "similarity");
    const auto m = get<std::string>(s, "metric", std::string(to_string(c.similarity.metric)), "similarity");
    if (m == "hybrid") c.similarity.metric = Metric::kHybrid;
    else if (m == "cosine") c.similarity.metric = Metric::kCosineOnly;
    else throw ConfigError("similarity.metric must be 'hybrid' or 'cosine'");
  }
  if (j.contains("dedup")) {
    check_keys(j.at("dedup"), "dedup", {"within_label"});
    c.within_label = get<bool>(j.at("dedup"), "within_label", false, "dedup");
  }
  if (j.contains("funcluster")) {
    const auto& f = j.at("funcluster");
    check_keys(f, "funcluster", {"tau", "gamma", "k", "nlist", "nprobe", "max_rounds", "exhaustive", "seed", "min_cluster_size"});
    auto& p = c.funcluster;
    p.tau = get<double>(f, "tau", p.tau, "funcluster");
    p.gamma = get<double>(f, "gamma", p.gamma, "funcluster");
    p.ann.k = get<std::size_t>(f, "k", p.ann.k, "funcluster");
    p.ann.nlist = get<std::size_t>(f, "nlist", p.ann.nlist, "funcluster");
    p.ann.nprobe = get<std::size_t>(f, "nprobe", p.ann.nprobe, "funcluster");
    p.ann.max_rounds = get<std::size_t>(f, "max_rounds", p.ann.max_rounds, "funcluster");
    p.ann.exhaustive = get<bool>(f, "exhaustive", p.ann.exhaustive, "funcluster");
    p.ann.seed = get<std::uint64_t>(f, "seed", p.ann.seed, "funcluster");
    p.min_cluster_size = get<std::size_t>(f, "min_cluster_size", p.min_cluster_size, "funcluster");
  }
  if (j.contains("qc")) {
    check_keys(j.at("qc"), "qc", {"gini_threshold", "seed"});
    c.gini_threshold = get<double>(j.at("qc"), "gini_threshold", c.gini_threshold, "qc");
    c.qc_seed = get<std::uint64_t>(j.at("qc"), "seed", c.qc_seed, "qc");
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  return from_json(load_toml_subset(path), path.parent_path());
}

void PipelineConfig::validate() const {
  if (!std::filesystem::exists(corpus)) throw ConfigError("corpus not found: " + corpus.string());
  if (kb && !std::filesystem::exists(*kb)) throw ConfigError("knowledge base not found: " + kb->string());
  if (taxonomy != "x86" && taxonomy != "managed" && !std::filesystem::exists(taxonomy))
    throw ConfigError("taxonomy not found: " + taxonomy);
  try {
    features.validate();
    similarity.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(funcluster.tau > 0.0 && funcluster.tau <= 1.0)) throw ConfigError("funcluster.tau must be in (0, 1]");
  if (!(funcluster.gamma > 0.0)) throw ConfigError("funcluster.gamma must be positive");
  if (funcluster.ann.k == 0) throw ConfigError("funcluster.k must be >= 1");
  if (funcluster.ann.nprobe == 0) throw ConfigError("funcluster.nprobe must be >= 1");
  if (funcluster.ann.max_rounds == 0) throw ConfigError("funcluster.max_rounds must be >= 1");
  if (funcluster.min_cluster_size < 2) throw ConfigError("funcluster.min_cluster_size must be >= 2");
  if (!(gini_threshold >= 0.0 && gini_threshold <= 1.0)) throw ConfigError("qc.gini_threshold must be in [0, 1]");
}

json PipelineConfig::to_json() const {
  const auto& a = funcluster.ann;
  return json{
      {"paths",
       {{"corpus", corpus.string()},
        {"kb", kb ? json(kb->string()) : json(nullptr)},
        {"taxonomy", taxonomy},
        {"output_dir", output_dir.string()}}},
      {"features", feature_config_to_json(features)},
      {"similarity", {{"tau", similarity.tau}, {"gamma", similarity.gamma}, {"metric", std::string(to_string(similarity.metric))}}},
      {"dedup", {{"within_label", within_label}}},
      {"funcluster",
       {{"tau", funcluster.tau},
        {"gamma", funcluster.gamma},
        {"k", a.k},
        {"nlist", a.nlist},
        {"nprobe", a.nprobe},
        {"max_rounds", a.max_rounds},
        {"exhaustive", a.exhaustive},
        {"seed", a.seed},
        {"min_cluster_size", funcluster.min_cluster_size}}},
      {"qc", {{"gini_threshold", gini_threshold}, {"seed", qc_seed}}},
  };
}

}  // namespace clarity

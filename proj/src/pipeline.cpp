#include "claritykit/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "claritykit/digest.hpp"
#include "claritykit/features_io.hpp"

namespace clarity {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- output lines ------------------------------------------------------------

json to_json(const DuplicateCluster& c) {
  return json{{"representative", c.representative}, {"size", c.members.size()}, {"members", c.members}};
}

json to_json(const LedgerEntry& e) {
  return json{{"removed_hash", e.removed_hash}, {"representative_hash", e.representative_hash}, {"similarity", e.similarity}};
}

json to_json(const CollisionGroup& g) {
  json labels = json::array();
  for (const auto& l : g.org_labels) labels.push_back({l.label, l.source});
  return json{{"sha256", g.sha256}, {"count", g.count}, {"org_labels", labels}, {"conflicting", g.conflicting}};
}

json to_json(const FunctionReuseCluster& c) {
  json blocks = json::array(), edges = json::array(), members = json::array();
  for (const auto& [id, n] : c.representative_summary.blocks) blocks.push_back({{"id", id}, {"n", n}});
  for (const auto& [s, d] : c.representative_summary.edges) edges.push_back({s, d});
  for (const auto& m : c.members)
    members.push_back({{"sha256", m.sample_sha256}, {"function_id", m.function_id}, {"start_address", m.start_address}});
  return json{{"cluster_id", c.cluster_id},
              {"size", c.size},
              {"org_distribution", c.org_distribution},
              {"representative",
               {{"sha256", c.representative.sample_sha256},
                {"function_id", c.representative.function_id},
                {"start_address", c.representative.start_address},
                {"cfg", {{"blocks", blocks}, {"edges", edges}}},
                {"asm_summary", c.representative_summary.asm_summary}}},
              {"cross_org", c.cross_org},
              {"members", members}};
}

void apply_label_consensus(SampleRecord& sample, double threshold) {
  if (sample.org_labels.empty()) return;
  const auto c = qc::label_consensus(sample.org_labels, threshold);
  if (sample.org_labels.size() == 1 && c.label) return;
  sample.org_labels = {{c.label.value_or(qc::kUnknownLabel), "consensus"}};
}

QcSummary qc_summary(const std::vector<SampleRecord>& samples, std::uint64_t seed) {
  QcSummary s;
  std::vector<qc::SamplingUnit> units;
  for (const auto& r : samples) {
    const auto label = qc::label_consensus(r.org_labels).label.value_or(qc::kUnknownLabel);
    if (label == qc::kUnknownLabel) continue;
    ++s.org_sizes[label];
    units.push_back({r.sha256, label, r.first_seen});
  }
  if (!s.org_sizes.empty()) s.diversity = qc::diversity(s.org_sizes);
  s.plan = qc::sampling_plan(s.org_sizes, seed);
  s.selection = qc::select_samples(s.plan, units);
  return s;
}

json to_json(const QcSummary& s) {
  json div = nullptr;
  if (s.diversity)
    div = {{"categories", s.diversity->categories},
           {"entropy", s.diversity->entropy},
           {"h_norm", s.diversity->h_norm},
           {"hhi", s.diversity->hhi}};
  return json{{"org_sizes", s.org_sizes},
              {"diversity", div},
              {"sampling_plan", {{"seed", s.plan.seed}, {"allocation", s.plan.allocation}, {"total", s.plan.total()}}},
              {"selection", s.selection}};
}

void write_jsonl(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l.dump() << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

// ---- manifest -------------------------------------------------------------------

json RunManifest::to_json(bool volatile_fields) const {
  json stages_j = json::array();
  for (const auto& s : stages) {
    json j{{"name", s.name},         {"status", s.status},   {"key", s.key},
           {"input_digest", s.input_digest}, {"outputs", s.outputs}, {"counts", s.counts}};
    if (!s.error.empty()) j["error"] = s.error;
    if (volatile_fields) {
      j["started"] = s.started;
      j["finished"] = s.finished;
      j["resumed"] = s.resumed;
    }
    stages_j.push_back(std::move(j));
  }
  json j{{"status", status}, {"parameters", parameters}, {"stages", stages_j}};
  if (!failed_stage.empty()) j["failed_stage"] = failed_stage;
  return j;
}

namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string corpus_digest(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && (e.path().extension() == ".json" || e.path().extension() == ".jsonl"))
        files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  std::string acc;
  for (const auto& f : files) acc += f.filename().string() + '\n' + file_sha256(f) + '\n';
  return sha256_hex(acc);
}

using Counts = std::map<std::string, std::uint64_t>;

class StageRunner {
public:
  StageRunner(fs::path root, RunManifest& manifest) : root_(std::move(root)), manifest_(manifest) {}

  // Runs `body` in a fresh directory unless a complete one exists for the
  // same key. Returns the stage directory.
  fs::path run(const std::string& name, const std::string& input_digest, const json& params,
               const std::function<Counts(const fs::path&)>& body) {
    StageRecord rec;
    rec.name = name;
    rec.input_digest = input_digest;
    rec.key = sha256_hex(name + '\n' + input_digest + '\n' + params.dump()).substr(0, 16);
    rec.started = now_utc();
    const fs::path dir = root_ / "stages" / (name + "-" + rec.key);
    try {
      if (auto done = load_done(dir)) {
        rec.outputs = done->first;
        rec.counts = done->second;
        rec.resumed = true;
      } else {
        const fs::path tmp = dir.string() + ".partial";
        fs::remove_all(tmp);
        fs::create_directories(tmp);
        rec.counts = body(tmp);
        for (const auto& e : fs::directory_iterator(tmp))
          if (e.is_regular_file()) rec.outputs[e.path().filename().string()] = file_sha256(e.path());
        std::ofstream(tmp / "stage.json", std::ios::binary) << json{{"outputs", rec.outputs}, {"counts", rec.counts}}.dump(2);
        fs::remove_all(dir);
        fs::rename(tmp, dir);
      }
      rec.status = "ok";
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      rec.finished = now_utc();
      manifest_.stages.push_back(rec);
      throw StageError(name, e.what());
    }
    rec.finished = now_utc();
    last_digest_ = sha256_hex(json(rec.outputs).dump());
    manifest_.stages.push_back(std::move(rec));
    return dir;
  }

  const std::string& last_digest() const noexcept { return last_digest_; }

private:
  static std::optional<std::pair<std::map<std::string, std::string>, Counts>> load_done(const fs::path& dir) {
    const auto marker = dir / "stage.json";
    if (!fs::exists(marker)) return std::nullopt;
    try {
      std::ifstream in(marker, std::ios::binary);
      const auto j = json::parse(in);
      auto outputs = j.at("outputs").get<std::map<std::string, std::string>>();
      for (const auto& [file, digest] : outputs)
        if (!fs::exists(dir / file) || file_sha256(dir / file) != digest) return std::nullopt;
      return std::make_pair(std::move(outputs), j.at("counts").get<Counts>());
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  fs::path root_;
  RunManifest& manifest_;
  std::string last_digest_;
};

void copy_out(const fs::path& from, const fs::path& to_dir) {
  fs::copy_file(from, to_dir / from.filename(), fs::copy_options::overwrite_existing);
}

}  // namespace

RunManifest run_pipeline(const PipelineConfig& config) {
  config.validate();
  const auto taxonomy = [&] {
    try {
      return resolve_taxonomy(config.taxonomy);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }();
  std::optional<alias::KnowledgeBase> kb;
  if (config.kb) {
    try {
      kb = alias::KnowledgeBase::load(*config.kb);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("knowledge base: ") + e.what());
    }
  }
  const auto& out = config.output_dir;
  fs::create_directories(out);

  RunManifest manifest;
  manifest.parameters = config.to_json();
  StageRunner runner(out, manifest);
  const auto params = manifest.parameters;

  try {
    auto dir = runner.run("ingest", corpus_digest(config.corpus), json::object(), [&](const fs::path& d) {
      auto samples = ingest_corpus(config.corpus);
      write_corpus(d / "samples.jsonl", samples);
      return Counts{{"in", samples.size()}, {"out", samples.size()}};
    });

    json normalize_params{{"kb", kb ? sha256_hex(kb->to_json().dump()) : ""}};
    dir = runner.run("normalize", runner.last_digest(), normalize_params, [&, prev = dir](const fs::path& d) {
      auto samples = ingest_corpus(prev / "samples.jsonl");
      const auto n = samples.size();
      Counts counts{{"in", n}, {"out", n}};
      std::vector<json> review;
      if (kb) {
        auto r = alias::normalize_labels(std::move(samples), *kb);
        samples = std::move(r.samples);
        for (const auto& item : r.review_queue) review.push_back(alias::to_json(item));
        counts["labels_accepted"] = r.report.accepted;
        counts["labels_review"] = r.report.review;
        counts["labels_no_match"] = r.report.no_match;
      }
      write_corpus(d / "samples.jsonl", samples);
      write_jsonl(d / "review.jsonl", review);
      return counts;
    });

    dir = runner.run("clean", runner.last_digest(), json{{"gini_threshold", config.gini_threshold}},
                     [&, prev = dir](const fs::path& d) {
                       auto samples = ingest_corpus(prev / "samples.jsonl");
                       Counts counts{{"in", samples.size()}};
                       auto exact = exact_hash_dedup(std::move(samples));
                       counts["after_exact_hash"] = exact.kept.size();
                       std::vector<json> collisions;
                       std::uint64_t conflicting = 0, unknown = 0;
                       for (const auto& g : exact.collisions) {
                         collisions.push_back(to_json(g));
                         conflicting += g.conflicting;
                       }
                       std::vector<SampleRecord> kept;
                       for (auto& s : exact.kept) {
                         if (!s.is_executable()) continue;
                         apply_label_consensus(s, config.gini_threshold);
                         if (!s.org_labels.empty() && s.org_labels.front().label == qc::kUnknownLabel) ++unknown;
                         kept.push_back(std::move(s));
                       }
                       counts["conflicting_groups"] = conflicting;
                       counts["unknown_labels"] = unknown;
                       counts["out"] = kept.size();
                       write_corpus(d / "samples.jsonl", kept);
                       write_jsonl(d / "collisions.jsonl", collisions);
                       return counts;
                     });
    const fs::path clean_dir = dir;

    json extract_params{{"features", params.at("features")}, {"taxonomy", sha256_hex(config.taxonomy)}};
    if (config.taxonomy != "x86" && config.taxonomy != "managed") extract_params["taxonomy"] = file_sha256(config.taxonomy);
    dir = runner.run("extract", runner.last_digest(), extract_params, [&, prev = dir](const fs::path& d) {
      const auto samples = ingest_corpus(prev / "samples.jsonl");
      FeatureFile ff;
      ff.config = config.features;
      std::uint64_t fallback = 0;
      for (const auto& s : samples) {
        ff.records.push_back(make_feature_record(s, taxonomy, config.features));
        fallback += ff.records.back().z_fallback;
      }
      write_features(d / "features.jsonl", ff);
      return Counts{{"in", samples.size()}, {"out", ff.records.size()}, {"z_fallback", fallback}};
    });
    const fs::path extract_dir = dir;

    dir = runner.run("dedup", runner.last_digest(), json{{"similarity", params.at("similarity")}, {"dedup", params.at("dedup")}},
                     [&, prev = dir](const fs::path& d) {
                       auto ff = read_features(prev / "features.jsonl");
                       DedupOptions opt;
                       opt.similarity = config.similarity;
                       opt.within_label = config.within_label;
                       const auto result = dedup(dedup_items(ff), opt);
                       std::vector<json> clusters, ledger;
                       std::set<std::string> reps;
                       for (const auto& c : result.clusters) {
                         clusters.push_back(to_json(c));
                         reps.insert(c.representative);
                       }
                       for (const auto& e : result.ledger) ledger.push_back(to_json(e));
                       write_jsonl(d / "clusters.jsonl", clusters);
                       write_jsonl(d / "removed.jsonl", ledger);
                       const auto in = ff.records.size();
                       std::erase_if(ff.records, [&](const FeatureRecord& r) { return !reps.count(r.sha256); });
                       write_features(d / "kept_features.jsonl", ff);
                       return Counts{{"in", in}, {"out", ff.records.size()}, {"removed", result.ledger.size()}};
                     });
    const fs::path dedup_dir = dir;
    const std::string dedup_digest = runner.last_digest();

    dir = runner.run("funcluster", runner.last_digest(), json{{"funcluster", params.at("funcluster")}},
                     [&, prev = dir](const fs::path& d) {
                       const auto ff = read_features(prev / "kept_features.jsonl");
                       const auto items = function_items(ff);
                       const auto result = cluster_functions(items, config.funcluster);
                       std::vector<json> lines;
                       std::uint64_t clustered = 0, cross = 0;
                       for (const auto& c : result.clusters) {
                         lines.push_back(to_json(c));
                         clustered += c.size;
                         cross += c.cross_org;
                       }
                       write_jsonl(d / "frc.jsonl", lines);
                       return Counts{{"samples", ff.records.size()},
                                     {"functions", items.size()},
                                     {"clusters", result.clusters.size()},
                                     {"clustered_functions", clustered},
                                     {"cross_org_clusters", cross},
                                     {"rounds", result.rounds}};
                     });

    runner.run("qc", dedup_digest, json{{"seed", config.qc_seed}}, [&](const fs::path& d) {
      const auto ff = read_features(dedup_dir / "kept_features.jsonl");
      std::vector<SampleRecord> reps;
      for (const auto& r : ff.records) {
        SampleRecord s;
        s.sha256 = r.sha256;
        s.first_seen = r.first_seen;
        s.org_labels = r.org_labels;
        reps.push_back(std::move(s));
      }
      const auto summary = qc_summary(reps, config.qc_seed);
      std::ofstream(d / "qc.json", std::ios::binary) << to_json(summary).dump(2) << '\n';
      return Counts{{"samples", reps.size()}, {"orgs", summary.org_sizes.size()}, {"sampled", summary.plan.total()}};
    });

    for (const auto& [stage, files] : std::vector<std::pair<fs::path, std::vector<std::string>>>{
             {clean_dir, {"collisions.jsonl"}},
             {extract_dir, {"features.jsonl"}},
             {dedup_dir, {"clusters.jsonl", "removed.jsonl", "kept_features.jsonl"}}}) {
      for (const auto& f : files) copy_out(stage / f, out);
    }
    for (const auto& s : manifest.stages) {
      const auto sdir = out / "stages" / (s.name + "-" + s.key);
      for (const auto& f : {"review.jsonl", "frc.jsonl", "qc.json"})
        if (s.outputs.count(f)) copy_out(sdir / f, out);
    }
    manifest.status = "ok";
  } catch (const StageError& e) {
    manifest.status = "failed";
    manifest.failed_stage = e.stage();
    for (std::size_t i = manifest.stages.size(); i < kStageNames.size(); ++i)
      manifest.stages.push_back({kStageNames[i], "not_run", "", "", {}, {}, "", "", false, ""});
  }
  std::ofstream(out / "manifest.json", std::ios::binary) << manifest.to_json().dump(2) << '\n';
  return manifest;
}

}  // namespace clarity

// claritykit: command-line front end for the corpus-curation library.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "claritykit/alias.hpp"
#include "claritykit/config.hpp"
#include "claritykit/corpus.hpp"
#include "claritykit/dedup.hpp"
#include "claritykit/eval.hpp"
#include "claritykit/features_io.hpp"
#include "claritykit/function_reuse.hpp"
#include "claritykit/pipeline.hpp"
#include "claritykit/qc.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace clarity;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitFailure = 3;

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// Writes `text` to `path`, or stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

FeatureConfig load_feature_config(const std::string& path) {
  if (path.empty()) return {};
  auto j = load_toml_subset(path);
  if (j.contains("features")) j = j.at("features");
  try {
    return feature_config_from_json(j);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

Metric parse_metric(const std::string& s) {
  if (s == "hybrid") return Metric::kHybrid;
  if (s == "cosine") return Metric::kCosineOnly;
  throw ConfigError("--metric must be 'hybrid' or 'cosine'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep))
    if (!part.empty()) out.push_back(part);
  return out;
}

// "REGISTER_RENAME=0.5,NOP_PAD=0.01"
eval::MutationSpec parse_ops(const std::string& text, std::uint64_t seed) {
  eval::MutationSpec spec;
  spec.seed = seed;
  for (const auto& item : split(text, ',')) {
    const auto eq = item.find('=');
    const auto name = item.substr(0, eq);
    const auto op = eval::parse_mutation_op(name);
    if (!op) throw ConfigError("unknown mutation operator '" + name + "'");
    double rate = 1.0;
    if (eq != std::string::npos) {
      try {
        rate = std::stod(item.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("bad rate in '" + item + "'");
      }
    }
    spec.rates[*op] = rate;
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

qc::LabelCounts counts_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("expected an object of label -> count");
  qc::LabelCounts c;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError("count for '" + k + "' must be a nonnegative integer");
    c[k] = v.get<std::uint64_t>();
  }
  return c;
}

std::vector<std::vector<double>> matrix_from_json(const json& j) {
  const auto& m = j.is_object() ? j.at("table") : j;
  try {
    return m.get<std::vector<std::vector<double>>>();
  } catch (const json::exception&) {
    throw ConfigError("expected a matrix of counts");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corpus curation toolkit: feature extraction, near-duplicate removal, function reuse clusters, "
               "alias normalization and dataset QC"};
  app.require_subcommand(1);
  std::function<int()> action;

  // ---- ingest / clean ---------------------------------------------------------
  std::string in_path, out_path;
  auto* ingest = app.add_subcommand("ingest", "Validate exports and write one corpus JSONL file");
  ingest->add_option("--in", in_path, "Export file, .jsonl corpus or directory")->required();
  ingest->add_option("--out", out_path, "Output corpus (.jsonl)")->required();
  ingest->callback([&] {
    action = [&] {
      const auto samples = ingest_corpus(in_path);
      write_corpus(out_path, samples);
      std::cerr << samples.size() << " samples\n";
      return 0;
    };
  });

  double gini_threshold = qc::kGiniThreshold;
  std::string collisions_path;
  auto* clean = app.add_subcommand("clean", "Exact-hash dedup, Gini label consensus and analyzability filter");
  clean->add_option("--in", in_path, "Corpus")->required();
  clean->add_option("--out", out_path, "Cleaned corpus (.jsonl)")->required();
  clean->add_option("--collisions", collisions_path, "Collision groups (.jsonl)");
  clean->add_option("--gini", gini_threshold, "Consensus threshold")->check(CLI::Range(0.0, 1.0));
  clean->callback([&] {
    action = [&] {
      auto exact = exact_hash_dedup(ingest_corpus(in_path));
      std::vector<SampleRecord> kept;
      for (auto& s : exact.kept) {
        if (!s.is_executable()) continue;
        apply_label_consensus(s, gini_threshold);
        kept.push_back(std::move(s));
      }
      write_corpus(out_path, kept);
      if (!collisions_path.empty()) {
        std::vector<json> lines;
        for (const auto& g : exact.collisions) lines.push_back(to_json(g));
        write_jsonl(collisions_path, lines);
      }
      std::cerr << exact.kept.size() << " after exact-hash dedup, " << kept.size() << " after filtering\n";
      return 0;
    };
  });

  // ---- extract ----------------------------------------------------------------
  std::string corpus_path, taxonomy_spec = "x86", config_path;
  auto* extract = app.add_subcommand("extract", "Compute opcode_cfg features");
  extract->add_option("--corpus", corpus_path, "Corpus")->required();
  extract->add_option("--taxonomy", taxonomy_spec, "Taxonomy file, or x86 / managed");
  extract->add_option("--config", config_path, "Config file with a [features] table");
  extract->add_option("--out", out_path, "Features file")->required();
  extract->callback([&] {
    action = [&] {
      const auto cfg = load_feature_config(config_path);
      const auto tax = resolve_taxonomy(taxonomy_spec);
      FeatureFile ff;
      ff.config = cfg;
      std::size_t skipped = 0;
      for (const auto& s : ingest_corpus(corpus_path)) {
        if (!s.is_executable()) {
          ++skipped;
          continue;
        }
        ff.records.push_back(make_feature_record(s, tax, cfg));
      }
      write_features(out_path, ff);
      std::cerr << ff.records.size() << " samples extracted, " << skipped << " metadata-only skipped\n";
      return 0;
    };
  });

  // ---- dedup ------------------------------------------------------------------
  std::string features_path, ledger_path, metric = "hybrid";
  SimilarityConfig sim;
  bool within_label = false;
  unsigned workers = 0;
  auto* dedup_cmd = app.add_subcommand("dedup", "Threshold-graph near-duplicate removal");
  dedup_cmd->add_option("--features", features_path, "Features file")->required();
  dedup_cmd->add_option("--tau", sim.tau, "Similarity threshold");
  dedup_cmd->add_option("--gamma", sim.gamma, "Gaussian kernel width");
  dedup_cmd->add_option("--metric", metric, "hybrid or cosine");
  dedup_cmd->add_flag("--within-label", within_label, "Only merge samples with the same label");
  dedup_cmd->add_option("--workers", workers, "Scoring threads (0: auto)");
  dedup_cmd->add_option("--out", out_path, "Clusters (.jsonl)")->required();
  dedup_cmd->add_option("--ledger", ledger_path, "Removed samples (.jsonl)");
  dedup_cmd->callback([&] {
    action = [&] {
      sim.metric = parse_metric(metric);
      try {
        sim.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      const auto ff = read_features(features_path);
      DedupOptions opt{sim, within_label, workers};
      const auto r = dedup(dedup_items(ff), opt);
      std::vector<json> clusters, ledger;
      for (const auto& c : r.clusters) clusters.push_back(to_json(c));
      for (const auto& e : r.ledger) ledger.push_back(to_json(e));
      write_jsonl(out_path, clusters);
      if (!ledger_path.empty()) write_jsonl(ledger_path, ledger);
      std::cerr << ff.records.size() << " samples -> " << r.clusters.size() << " kept, " << r.ledger.size()
                << " removed\n";
      return 0;
    };
  });

  // ---- funcluster ---------------------------------------------------------------
  ClusterParams cp;
  auto* fc = app.add_subcommand("funcluster", "Function reuse clusters");
  fc->add_option("--features", features_path, "Features file")->required();
  fc->add_option("--tau", cp.tau, "Similarity threshold");
  fc->add_option("--gamma", cp.gamma, "Gaussian kernel width");
  fc->add_option("--k", cp.ann.k, "Neighbours per query")->check(CLI::PositiveNumber);
  fc->add_option("--nlist", cp.ann.nlist, "Inverted lists (0: sqrt n)");
  fc->add_option("--nprobe", cp.ann.nprobe, "Lists probed per query")->check(CLI::PositiveNumber);
  fc->add_option("--max-rounds", cp.ann.max_rounds, "Search-and-prune rounds")->check(CLI::PositiveNumber);
  fc->add_flag("--exhaustive", cp.ann.exhaustive, "Exact candidate generation");
  fc->add_option("--min-size", cp.min_cluster_size, "Smallest reported cluster")->check(CLI::Range(2, 1 << 30));
  fc->add_option("--seed", cp.ann.seed, "Index seed");
  fc->add_option("--out", out_path, "FRC lines (.jsonl)")->required();
  fc->callback([&] {
    action = [&] {
      if (!(cp.tau > 0 && cp.tau <= 1) || !(cp.gamma > 0)) throw ConfigError("tau must be in (0, 1] and gamma > 0");
      const auto ff = read_features(features_path);
      const auto items = function_items(ff);
      const auto r = cluster_functions(items, cp);
      std::vector<json> lines;
      for (const auto& c : r.clusters) lines.push_back(to_json(c));
      write_jsonl(out_path, lines);
      std::cerr << items.size() << " functions -> " << r.clusters.size() << " clusters in " << r.rounds
                << " rounds\n";
      return 0;
    };
  });

  // ---- alias --------------------------------------------------------------------
  auto* alias_cmd = app.add_subcommand("alias", "Threat-actor alias knowledge base");
  alias_cmd->require_subcommand(1);
  std::string kb_path, query_name, review_path, report_path;
  double jaccard = alias::kDefaultJaccard;

  auto* aq = alias_cmd->add_subcommand("query", "Match one name");
  aq->add_option("name", query_name, "Name to match")->required();
  aq->add_option("--kb", kb_path, "Knowledge base (.json)")->required();
  aq->callback([&] {
    action = [&] {
      const auto kb = alias::KnowledgeBase::load(kb_path);
      std::cout << alias::to_json(kb.match(query_name)).dump(2) << '\n';
      return 0;
    };
  });

  auto* an = alias_cmd->add_subcommand("normalize", "Relabel a corpus with canonical names");
  an->add_option("--in", in_path, "Corpus")->required();
  an->add_option("--kb", kb_path, "Knowledge base (.json)")->required();
  an->add_option("--out", out_path, "Relabeled corpus (.jsonl)")->required();
  an->add_option("--review", review_path, "Review queue (.jsonl)");
  an->add_option("--report", report_path, "Summary report (.json)");
  an->callback([&] {
    action = [&] {
      const auto kb = alias::KnowledgeBase::load(kb_path);
      auto r = alias::normalize_labels(ingest_corpus(in_path), kb);
      write_corpus(out_path, r.samples);
      if (!review_path.empty()) {
        std::vector<json> lines;
        for (const auto& item : r.review_queue) lines.push_back(alias::to_json(item));
        write_jsonl(review_path, lines);
      }
      const auto report = alias::to_json(r.report).dump(2) + "\n";
      if (!report_path.empty()) emit(report_path, report);
      else std::cerr << report;
      return 0;
    };
  });

  std::string conflicts_path;
  auto* am = alias_cmd->add_subcommand("merge", "Merge overlapping entries");
  am->add_option("--kb", kb_path, "Knowledge base (.json)")->required();
  am->add_option("--jaccard", jaccard, "Alias-set Jaccard threshold")->check(CLI::Range(0.0, 1.0));
  am->add_option("--out", out_path, "Merged knowledge base (default: stdout)");
  am->add_option("--conflicts", conflicts_path, "Conflicts (.jsonl)");
  am->callback([&] {
    action = [&] {
      const auto kb = alias::KnowledgeBase::load(kb_path, false);
      const auto r = alias::merge_entities(kb, jaccard);
      emit(out_path, r.kb.to_json().dump(2) + "\n");
      std::vector<json> lines;
      for (const auto& c : r.conflicts)
        lines.push_back({{"kind", c.kind}, {"canonical_names", c.canonical_names}, {"detail", c.detail}});
      if (!conflicts_path.empty()) write_jsonl(conflicts_path, lines);
      std::cerr << kb.entries().size() << " entries -> " << r.kb.entries().size() << ", " << r.conflicts.size()
                << " conflicts\n";
      return 0;
    };
  });

  // ---- qc -------------------------------------------------------------------------
  auto* qc_cmd = app.add_subcommand("qc", "Dataset quality-control statistics");
  qc_cmd->require_subcommand(1);
  std::uint64_t seed = 0, successes = 0, trials = 0;
  double confidence = 0.95;
  bool fleiss = false;

  auto* qg = qc_cmd->add_subcommand("gini", "Gini label consensus");
  qg->add_option("--in", in_path, "{label: count} object, or {key: {label: count}}")->required();
  qg->add_option("--threshold", gini_threshold, "Consensus threshold")->check(CLI::Range(0.0, 1.0));
  qg->add_option("--out", out_path, "Report (default: stdout)");
  qg->callback([&] {
    action = [&] {
      const auto j = read_json(in_path);
      auto one = [&](const json& counts) {
        const auto c = qc::gini_consensus(counts_from_json(counts), gini_threshold);
        return json{{"gini", c.gini}, {"label", c.label.value_or(qc::kUnknownLabel)}, {"consensus", c.label.has_value()}};
      };
      const bool grouped = j.is_object() && !j.empty() && j.begin()->is_object();
      json report;
      if (grouped)
        for (const auto& [k, v] : j.items()) report[k] = one(v);
      else
        report = one(j);
      emit(out_path, report.dump(2) + "\n");
      return 0;
    };
  });

  auto* qd = qc_cmd->add_subcommand("diversity", "Normalized entropy and HHI");
  qd->add_option("--in", in_path, "{category: count} object")->required();
  qd->add_option("--out", out_path, "Report (default: stdout)");
  qd->callback([&] {
    action = [&] {
      qc::Diversity d;
      try {
        d = qc::diversity(counts_from_json(read_json(in_path)));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      emit(out_path, json{{"categories", d.categories}, {"entropy", d.entropy}, {"h_norm", d.h_norm}, {"hhi", d.hhi}}.dump(2) + "\n");
      return 0;
    };
  });

  auto* qp = qc_cmd->add_subcommand("plan", "Stratified sampling plan");
  qp->add_option("--in", in_path, "{org: size} object, or a corpus with --corpus")->required();
  bool plan_corpus = false;
  qp->add_flag("--corpus", plan_corpus, "Treat --in as a corpus and also select samples");
  qp->add_option("--seed", seed, "Selection seed");
  qp->add_option("--out", out_path, "Report (default: stdout)");
  qp->callback([&] {
    action = [&] {
      json report;
      if (plan_corpus) {
        report = to_json(qc_summary(ingest_corpus(in_path), seed));
      } else {
        std::map<std::string, std::uint64_t> sizes;
        for (const auto& [org, n] : counts_from_json(read_json(in_path))) sizes[org] = n;
        try {
          const auto plan = qc::sampling_plan(sizes, seed);
          report = {{"seed", plan.seed}, {"allocation", plan.allocation}, {"total", plan.total()}};
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      }
      emit(out_path, report.dump(2) + "\n");
      return 0;
    };
  });

  auto* qci = qc_cmd->add_subcommand("ci", "Clopper-Pearson interval for label accuracy");
  qci->add_option("--in", in_path, "{successes, trials, confidence} object");
  qci->add_option("--successes", successes, "Correct labels");
  qci->add_option("--trials", trials, "Labels checked");
  qci->add_option("--confidence", confidence, "Confidence level");
  qci->add_option("--out", out_path, "Report (default: stdout)");
  qci->callback([&] {
    action = [&] {
      if (!in_path.empty()) {
        const auto j = read_json(in_path);
        successes = j.at("successes").get<std::uint64_t>();
        trials = j.at("trials").get<std::uint64_t>();
        confidence = j.value("confidence", confidence);
      }
      qc::AccuracyReport r;
      try {
        r = qc::clopper_pearson(successes, trials, confidence);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      emit(out_path, json{{"trials", r.n}, {"successes", r.s}, {"confidence", r.confidence}, {"point", r.point},
                          {"ci_low", r.ci_low}, {"ci_high", r.ci_high}}
                             .dump(2) + "\n");
      return 0;
    };
  });

  auto* qk = qc_cmd->add_subcommand("kappa", "Cohen's or Fleiss' kappa");
  qk->add_option("--in", in_path, "Contingency table, or item x category counts with --fleiss")->required();
  qk->add_flag("--fleiss", fleiss, "Fleiss' kappa over item x category counts");
  qk->add_option("--out", out_path, "Report (default: stdout)");
  qk->callback([&] {
    action = [&] {
      const auto m = matrix_from_json(read_json(in_path));
      double k = 0;
      try {
        k = fleiss ? qc::fleiss_kappa(m) : qc::cohen_kappa(m);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      emit(out_path, json{{fleiss ? "fleiss_kappa" : "cohen_kappa", k}}.dump(2) + "\n");
      return 0;
    };
  });

  // ---- evaluation -------------------------------------------------------------------
  std::string base_path = "synthetic", configs_arg = "all", thresholds_arg = "default",
              ops_arg = "REGISTER_RENAME=0.5,CONSTANT_EDIT=0.5,NOP_PAD=0.01";
  std::size_t groups = 221, total_samples = 0, count = 0;
  long isolated = -1;
  auto* ablate = app.add_subcommand("ablate", "Ablation matrix on a mutation ground-truth corpus");
  ablate->add_option("--base", base_path, "Base exports, or 'synthetic'");
  ablate->add_option("--groups", groups, "Ground-truth groups, isolated ones included");
  ablate->add_option("--isolated", isolated, "Singleton groups (default: 85/221 of --groups)");
  ablate->add_option("--samples", total_samples, "Corpus size (default: 1181/221 of --groups)");
  ablate->add_option("--configs", configs_arg, "'all' or comma-separated ids (B1..H4)");
  ablate->add_option("--thresholds", thresholds_arg, "'default' or comma-separated values");
  ablate->add_option("--ops", ops_arg, "Mutation operators and rates, OP=rate,...");
  ablate->add_option("--seed", seed, "Seed for group sizes and mutations");
  ablate->add_option("--taxonomy", taxonomy_spec, "Taxonomy file, or x86 / managed");
  ablate->add_option("--out", out_path, "CSV (default: stdout)");
  ablate->callback([&] {
    action = [&] {
      const std::size_t iso = isolated >= 0 ? static_cast<std::size_t>(isolated)
                                            : static_cast<std::size_t>(std::llround(groups * 85.0 / 221.0));
      const std::size_t total = total_samples ? total_samples : static_cast<std::size_t>(std::llround(groups * 1181.0 / 221.0));
      if (iso > groups) throw ConfigError("--isolated exceeds --groups");
      const std::size_t dup_groups = groups - iso;
      if (total < iso + 2 * dup_groups) throw ConfigError("--samples too small for the group count");
      std::vector<SampleRecord> bases;
      if (base_path == "synthetic") {
        bases = eval::synthesize_corpus(groups, seed);
      } else {
        for (auto& s : ingest_corpus(base_path))
          if (s.is_executable()) bases.push_back(std::move(s));
      }
      eval::GroundTruthSpec gt;
      gt.group_sizes = eval::draw_group_sizes(dup_groups, total - iso, 2, 69, seed);
      gt.isolated = iso;
      gt.mutation = parse_ops(ops_arg, seed);
      const auto corpus = eval::build_ground_truth(bases, gt);

      std::vector<eval::AblationConfig> configs;
      if (configs_arg == "all") configs = eval::ablation_matrix();
      else
        for (const auto& id : split(configs_arg, ',')) {
          try {
            configs.push_back(eval::ablation_config(id));
          } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
          }
        }
      std::vector<double> thresholds = eval::kDefaultThresholds;
      if (thresholds_arg != "default") {
        thresholds.clear();
        for (const auto& t : split(thresholds_arg, ',')) thresholds.push_back(std::stod(t));
      }
      const auto rows = eval::run_ablation(corpus, configs, thresholds, resolve_taxonomy(taxonomy_spec));
      emit(out_path, eval::ablation_csv(rows));
      std::cerr << corpus.samples.size() << " samples, " << corpus.positive_pairs() << " duplicate pairs\n";
      for (const auto& r : rows) {
        const auto& b = r.metrics[r.best];
        std::cerr << r.config_id << ": best F1 " << b.confusion.f1() << " at " << b.threshold
                  << (r.partial ? " (partial)" : "") << '\n';
      }
      return 0;
    };
  });

  auto* gen = app.add_subcommand("gen-corpus", "Write synthetic base samples");
  gen->add_option("--count", count, "Samples")->required();
  gen->add_option("--seed", seed, "Seed");
  gen->add_option("--out", out_path, "Corpus (.jsonl)")->required();
  gen->callback([&] {
    action = [&] {
      write_corpus(out_path, eval::synthesize_corpus(count, seed));
      return 0;
    };
  });

  auto* mut = app.add_subcommand("mutate", "Apply mutation operators to every sample of a corpus");
  mut->add_option("--in", in_path, "Corpus")->required();
  mut->add_option("--ops", ops_arg, "Mutation operators and rates, OP=rate,...");
  mut->add_option("--seed", seed, "Seed");
  mut->add_option("--out", out_path, "Mutated corpus (.jsonl)")->required();
  mut->callback([&] {
    action = [&] {
      const auto spec = parse_ops(ops_arg, seed);
      std::vector<SampleRecord> out;
      for (const auto& s : ingest_corpus(in_path)) {
        auto r = eval::mutate(s, spec);
        for (const auto& n : r.notices) std::cerr << s.sha256 << ": " << n << '\n';
        out.push_back(std::move(r.sample));
      }
      write_corpus(out_path, out);
      return 0;
    };
  });

  // ---- pipeline -------------------------------------------------------------------------
  auto* pipe = app.add_subcommand("pipeline", "Run every stage from one config file");
  pipe->require_subcommand(1);
  auto* run = pipe->add_subcommand("run", "Run (or resume) the pipeline");
  run->add_option("--config", config_path, "Pipeline config (TOML subset)")->required();
  run->callback([&] {
    action = [&] {
      const auto cfg = PipelineConfig::load(config_path);
      const auto m = run_pipeline(cfg);
      for (const auto& s : m.stages) {
        std::cerr << s.name << ": " << s.status << (s.resumed ? " (resumed)" : "");
        for (const auto& [k, v] : s.counts) std::cerr << ' ' << k << '=' << v;
        if (!s.error.empty()) std::cerr << " error: " << s.error;
        std::cerr << '\n';
      }
      return m.status == "ok" ? 0 : kExitFailure;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  try {
    return action ? action() : 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

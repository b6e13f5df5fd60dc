#include "claritykit/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "claritykit/digest.hpp"

namespace clarity::eval {

namespace {

// Portable draws on top of mt19937_64 (std distributions are
// implementation-defined).
class Rng {
public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return uniform() < p; }
  std::size_t below(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do r = g_();
    while (r >= limit);
    return static_cast<std::size_t>(r % n);
  }
  std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }
  template <class T>
  const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

private:
  std::mt19937_64 g_;
};

const std::vector<std::string> kRegisters{"eax", "ebx", "ecx", "edx", "esi", "edi",
                                          "r8d", "r9d", "r10d", "r11d", "r12d", "r13d"};

bool is_register(const std::string& tok) {
  return std::find(kRegisters.begin(), kRegisters.end(), tok) != kRegisters.end();
}

}  // namespace

std::string_view to_string(MutationOp op) noexcept {
  switch (op) {
    case MutationOp::kRegisterRename: return "REGISTER_RENAME";
    case MutationOp::kNopPad: return "NOP_PAD";
    case MutationOp::kBlockReorder: return "BLOCK_REORDER";
    case MutationOp::kConstantEdit: return "CONSTANT_EDIT";
    case MutationOp::kHelperRefactor: return "HELPER_REFACTOR";
  }
  return "?";
}

std::optional<MutationOp> parse_mutation_op(std::string_view name) noexcept {
  for (auto op : {MutationOp::kRegisterRename, MutationOp::kNopPad, MutationOp::kBlockReorder,
                  MutationOp::kConstantEdit, MutationOp::kHelperRefactor})
    if (to_string(op) == name) return op;
  return std::nullopt;
}

void MutationSpec::validate() const {
  for (const auto& [op, r] : rates)
    if (!(r >= 0.0 && r <= 1.0))
      throw std::invalid_argument("mutation rate for " + std::string(to_string(op)) + " outside [0, 1]");
}

std::string MutationSpec::describe() const {
  std::ostringstream out;
  out << "seed=" << seed;
  for (const auto& [op, r] : rates) out << ';' << to_string(op) << '=' << r;
  return out.str();
}

// ---- mutation operators -----------------------------------------------------

namespace {

// Splits operand text into tokens and separators, rewriting tokens via `f`.
template <class F>
std::string rewrite_tokens(const std::string& operands, F f) {
  std::string out, tok;
  auto flush = [&] {
    if (!tok.empty()) out += f(tok);
    tok.clear();
  };
  for (char c : operands) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      tok.push_back(c);
    } else {
      flush();
      out.push_back(c);
    }
  }
  flush();
  return out;
}

bool is_constant(const std::string& tok) {
  if (tok.size() > 2 && tok[0] == '0' && (tok[1] == 'x' || tok[1] == 'X'))
    return std::all_of(tok.begin() + 2, tok.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
  return !tok.empty() && std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool register_rename(SampleRecord& s, double rate, Rng& rng) {
  auto perm = kRegisters;
  rng.shuffle(perm);
  std::unordered_map<std::string, std::string> map;
  for (std::size_t i = 0; i < kRegisters.size(); ++i) map[kRegisters[i]] = perm[i];
  bool any_site = false;
  for (auto& fn : s.functions)
    for (auto& b : fn.cfg.blocks)
      for (auto& in : b.instructions) {
        bool has = false;
        rewrite_tokens(in.operands, [&](const std::string& t) {
          has = has || is_register(t);
          return t;
        });
        if (!has) continue;
        any_site = true;
        if (!rng.chance(rate)) continue;
        in.operands = rewrite_tokens(in.operands, [&](const std::string& t) { return is_register(t) ? map[t] : t; });
      }
  return any_site;
}

bool constant_edit(SampleRecord& s, double rate, Rng& rng) {
  bool any_site = false;
  for (auto& fn : s.functions)
    for (auto& b : fn.cfg.blocks)
      for (auto& in : b.instructions) {
        bool has = false;
        rewrite_tokens(in.operands, [&](const std::string& t) {
          has = has || is_constant(t);
          return t;
        });
        if (!has) continue;
        any_site = true;
        if (!rng.chance(rate)) continue;
        in.operands = rewrite_tokens(in.operands, [&](const std::string& t) {
          if (!is_constant(t)) return t;
          char buf[24];
          std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(rng.below(1u << 20)));
          return std::string(buf);
        });
      }
  return any_site;
}

bool nop_pad(SampleRecord& s, double rate, Rng& rng) {
  bool any_site = false;
  for (auto& fn : s.functions)
    for (auto& b : fn.cfg.blocks) {
      any_site = true;
      if (!rng.chance(rate)) continue;
      // Never after a terminating transfer.
      const std::size_t slots = b.instructions.empty() ? 1 : b.instructions.size();
      const auto at = rng.below(slots);
      b.instructions.insert(b.instructions.begin() + static_cast<std::ptrdiff_t>(at), Instruction{"nop", 0, ""});
    }
  return any_site;
}

bool block_reorder(SampleRecord& s, double rate, Rng& rng) {
  bool any_site = false;
  for (auto& fn : s.functions) {
    if (fn.cfg.blocks.size() < 2) continue;
    any_site = true;
    if (!rng.chance(rate)) continue;
    std::vector<std::uint64_t> ids;
    for (const auto& b : fn.cfg.blocks) ids.push_back(b.id);
    auto shuffled = ids;
    rng.shuffle(shuffled);
    std::unordered_map<std::uint64_t, std::uint64_t> relabel;
    for (std::size_t i = 0; i < ids.size(); ++i) relabel[ids[i]] = shuffled[i];
    for (auto& b : fn.cfg.blocks) b.id = relabel[b.id];
    for (auto& [src, dst] : fn.cfg.edges) {
      src = relabel[src];
      dst = relabel[dst];
    }
  }
  return any_site;
}

// Splits one block with out-degree <= 1 in a function that has a caller.
bool helper_refactor(SampleRecord& s, double rate, Rng& rng) {
  std::set<std::string> callees;
  for (const auto& [caller, callee] : s.fcg_edges)
    if (caller != callee) callees.insert(callee);
  std::vector<std::pair<std::size_t, std::size_t>> sites;  // (function, block)
  for (std::size_t f = 0; f < s.functions.size(); ++f) {
    const auto& fn = s.functions[f];
    if (!callees.count(fn.function_id)) continue;
    const auto deg = fn.cfg.out_degrees();
    for (std::size_t b = 0; b < fn.cfg.blocks.size(); ++b)
      if (deg[b] <= 1 && fn.cfg.blocks[b].size() >= 2) sites.emplace_back(f, b);
  }
  if (sites.empty()) return false;
  if (!rng.chance(rate)) return true;
  const auto [f, bi] = sites[rng.below(sites.size())];
  auto& cfg = s.functions[f].cfg;
  std::uint64_t fresh = 0;
  for (const auto& b : cfg.blocks) fresh = std::max(fresh, b.id + 1);
  auto& head = cfg.blocks[bi];
  const auto cut = 1 + rng.below(head.size() - 1);
  BasicBlock tail;
  tail.id = fresh;
  tail.instructions.assign(head.instructions.begin() + static_cast<std::ptrdiff_t>(cut), head.instructions.end());
  head.instructions.resize(cut);
  const auto head_id = head.id;
  for (auto& [src, dst] : cfg.edges)
    if (src == head_id) src = fresh;
  cfg.edges.emplace_back(head_id, fresh);
  cfg.blocks.insert(cfg.blocks.begin() + static_cast<std::ptrdiff_t>(bi + 1), std::move(tail));
  return true;
}

}  // namespace

MutationOutcome mutate(const SampleRecord& sample, const MutationSpec& spec) {
  spec.validate();
  if (sample.functions.empty()) throw std::invalid_argument("mutate: sample has no functions");
  MutationOutcome out{sample, {}};
  Rng rng(spec.seed ^ std::stoull(sample.sha256.substr(0, 16), nullptr, 16));
  for (const auto& [op, rate] : spec.rates) {
    bool applied = false;
    switch (op) {
      case MutationOp::kRegisterRename: applied = register_rename(out.sample, rate, rng); break;
      case MutationOp::kNopPad: applied = nop_pad(out.sample, rate, rng); break;
      case MutationOp::kBlockReorder: applied = block_reorder(out.sample, rate, rng); break;
      case MutationOp::kConstantEdit: applied = constant_edit(out.sample, rate, rng); break;
      case MutationOp::kHelperRefactor: applied = helper_refactor(out.sample, rate, rng); break;
    }
    if (!applied) out.notices.push_back(std::string(to_string(op)) + ": no mutable site, skipped");
  }
  out.sample.sha256 = sha256_hex(content_digest(out.sample) + '|' + sample.sha256 + '|' + spec.describe());
  return out;
}

// ---- synthetic samples -------------------------------------------------------

namespace {

struct Style {
  std::array<double, 7> mix{};  // MEM, ARITH, CALL, LOADC, CONV, STACK, OTHER
  double branchiness = 0.3;
  double loopiness = 0.1;
  std::size_t mean_blocks = 6;
  std::size_t mean_len = 5;
};

const std::array<std::vector<std::string>, 7> kPools{{
    {"mov", "movzx", "lea", "movsx", "movq", "movdqu", "cmovne", "xchg"},
    {"add", "sub", "xor", "and", "or", "cmp", "test", "imul", "shl", "shr", "inc", "dec", "not", "neg"},
    {"call"},
    {"movabs", "fld1", "fldz"},
    {"cdqe", "cwde", "cdq", "cvtsi2sd"},
    {"push", "pop"},
    {"nop", "int3"},
}};

std::string operand_text(std::size_t pool, Rng& rng) {
  const auto& r1 = rng.pick(kRegisters);
  const auto& r2 = rng.pick(kRegisters);
  char imm[16];
  std::snprintf(imm, sizeof imm, "0x%zx", rng.below(4096));
  switch (pool) {
    case 0: return rng.chance(0.5) ? r1 + ", [" + r2 + "+" + imm + "]" : "[" + r1 + "], " + r2;
    case 1: return rng.chance(0.5) ? r1 + ", " + r2 : r1 + ", " + imm;
    case 2: return std::string("sub_") + imm;
    case 3: return r1 + ", " + imm;
    case 5: return r1;
    default: return "";
  }
}

Instruction draw_instruction(const Style& st, Rng& rng) {
  double u = rng.uniform(), acc = 0;
  std::size_t pool = 0;
  for (; pool + 1 < st.mix.size(); ++pool) {
    acc += st.mix[pool];
    if (u < acc) break;
  }
  Instruction in;
  in.mnemonic = rng.pick(kPools[pool]);
  in.operands = operand_text(pool, rng);
  in.operand_count = in.operands.empty() ? 0 : static_cast<std::uint32_t>(std::count(in.operands.begin(), in.operands.end(), ',') + 1);
  return in;
}

std::size_t draw_around(std::size_t mean, std::size_t lo, std::size_t hi, Rng& rng) {
  // Geometric-like spread around `mean`.
  const double e = -std::log(1.0 - rng.uniform()) * static_cast<double>(mean);
  return std::clamp<std::size_t>(static_cast<std::size_t>(e) + lo, lo, hi);
}

}  // namespace

SampleRecord synthesize_sample(std::uint64_t seed, const SyntheticSpec& spec) {
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
  Style st;
  double total = 0;
  for (std::size_t k = 0; k < st.mix.size(); ++k) {
    // Dirichlet(1) over the categories, with OTHER kept small.
    st.mix[k] = -std::log(1.0 - rng.uniform()) * (k == 6 ? 0.05 : 1.0);
    total += st.mix[k];
  }
  for (auto& m : st.mix) m /= total;
  st.branchiness = 0.15 + 0.4 * rng.uniform();
  st.loopiness = 0.02 + 0.15 * rng.uniform();
  st.mean_blocks = 2 + rng.below(8);
  st.mean_len = 2 + rng.below(7);

  SampleRecord s;
  s.file_type = "PE32";
  s.packed = false;
  s.first_seen = Date{std::chrono::year{static_cast<int>(2008 + rng.below(17))},
                      std::chrono::month{static_cast<unsigned>(1 + rng.below(12))},
                      std::chrono::day{static_cast<unsigned>(1 + rng.below(28))}};
  s.org_labels.push_back({rng.pick(spec.orgs), "synthetic"});

  const std::size_t nfn = rng.between(spec.min_functions, spec.max_functions);
  std::uint64_t address = 0x401000;
  for (std::size_t f = 0; f < nfn; ++f) {
    FunctionRecord fn;
    char name[32];
    std::snprintf(name, sizeof name, "sub_%llx", static_cast<unsigned long long>(address));
    fn.function_id = name;
    fn.start_address = address;
    const std::size_t nb = draw_around(st.mean_blocks, 1, spec.max_blocks, rng);
    std::set<Edge> edges;
    for (std::size_t b = 0; b < nb; ++b) {
      BasicBlock blk;
      blk.id = b;
      const std::size_t len = draw_around(st.mean_len, 1, spec.max_block_len, rng);
      for (std::size_t i = 0; i + 1 < len; ++i) blk.instructions.push_back(draw_instruction(st, rng));
      if (b + 1 == nb) {
        blk.instructions.push_back({"ret", 0, ""});
      } else if (rng.chance(st.branchiness) && b + 2 < nb) {
        edges.emplace(b, b + 1);
        edges.emplace(b, rng.between(b + 2, nb - 1));
        blk.instructions.push_back({rng.pick(std::vector<std::string>{"je", "jne", "jg", "jl", "ja", "jb"}), 1, "loc"});
      } else if (rng.chance(st.loopiness) && b > 0) {
        edges.emplace(b, b + 1);
        edges.emplace(b, rng.below(b + 1));
        blk.instructions.push_back({"jne", 1, "loc"});
      } else {
        edges.emplace(b, b + 1);
        blk.instructions.push_back({"jmp", 1, "loc"});
      }
      address += 4 * blk.instructions.size();
      fn.cfg.blocks.push_back(std::move(blk));
    }
    fn.cfg.edges.assign(edges.begin(), edges.end());
    address += 16;
    s.functions.push_back(std::move(fn));
  }
  for (std::size_t f = 1; f < nfn; ++f) {
    s.fcg_edges.emplace_back(s.functions[rng.below(f)].function_id, s.functions[f].function_id);
    if (rng.chance(0.3)) s.fcg_edges.emplace_back(s.functions[f].function_id, s.functions[rng.below(nfn)].function_id);
  }
  s.sha256 = content_digest(s);
  return s;
}

std::array<double, kNumCategories> category_mix(const SampleRecord& sample, const TaxonomyTable& taxonomy) {
  std::array<double, kNumCategories> mix{};
  double total = 0;
  for (const auto& fn : sample.functions)
    for (const auto& b : fn.cfg.blocks) {
      const auto counts = block_category_counts(b, taxonomy);
      for (std::size_t k = 0; k < kNumCategories; ++k) {
        mix[k] += static_cast<double>(counts[k]);
        total += static_cast<double>(counts[k]);
      }
    }
  if (total > 0)
    for (auto& m : mix) m /= total;
  return mix;
}

std::vector<SampleRecord> synthesize_corpus(std::size_t count, std::uint64_t seed, const SyntheticSpec& spec) {
  const auto& tax = TaxonomyTable::default_x86();
  std::vector<SampleRecord> out;
  std::vector<std::array<double, kNumCategories>> mixes;
  out.reserve(count);
  const std::size_t budget = 100 * count + 100;
  for (std::uint64_t next = seed; out.size() < count; ++next) {
    if (next - seed >= budget)
      throw std::runtime_error("synthesize_corpus: could not draw " + std::to_string(count) +
                               " samples at the requested mix distance");
    auto s = synthesize_sample(next, spec);
    const auto mix = category_mix(s, tax);
    bool distinct = true;
    for (const auto& m : mixes) {
      double tv = 0;
      for (std::size_t k = 0; k < kNumCategories; ++k) tv += std::abs(mix[k] - m[k]);
      if (0.5 * tv < spec.min_mix_distance) {
        distinct = false;
        break;
      }
    }
    if (!distinct) continue;
    mixes.push_back(mix);
    out.push_back(std::move(s));
  }
  return out;
}

// ---- ground truth -------------------------------------------------------------

std::size_t LabeledCorpus::positive_pairs() const {
  std::map<std::size_t, std::size_t> sizes;
  for (auto g : group) ++sizes[g];
  std::size_t p = 0;
  for (const auto& [g, n] : sizes) p += n * (n - 1) / 2;
  return p;
}

LabeledCorpus build_ground_truth(const std::vector<SampleRecord>& bases, const GroundTruthSpec& spec) {
  const std::size_t need = spec.group_sizes.size() + spec.isolated;
  if (bases.size() < need)
    throw std::invalid_argument("build_ground_truth: need " + std::to_string(need) + " base samples, have " +
                                std::to_string(bases.size()));
  LabeledCorpus out;
  out.duplicate_groups = spec.group_sizes.size();
  std::size_t next_base = 0;
  for (std::size_t g = 0; g < spec.group_sizes.size(); ++g) {
    const auto size = spec.group_sizes[g];
    if (size < 2) throw std::invalid_argument("build_ground_truth: duplicate groups need size >= 2");
    const auto& base = bases[next_base++];
    out.samples.push_back(base);
    out.group.push_back(g);
    for (std::size_t m = 1; m < size; ++m) {
      auto ms = spec.mutation;
      ms.seed = spec.mutation.seed * 1000003ULL + g * 7919ULL + m;
      out.samples.push_back(mutate(base, ms).sample);
      out.group.push_back(g);
    }
  }
  for (std::size_t i = 0; i < spec.isolated; ++i) {
    out.samples.push_back(bases[next_base++]);
    out.group.push_back(spec.group_sizes.size() + i);
  }
  return out;
}

std::vector<std::size_t> draw_group_sizes(std::size_t groups, std::size_t total, std::size_t min_size,
                                          std::size_t max_size, std::uint64_t seed) {
  if (groups == 0) return {};
  if (groups * min_size > total || groups * max_size < total)
    throw std::invalid_argument("draw_group_sizes: total not reachable with the given bounds");
  Rng rng(seed);
  std::vector<std::size_t> sizes(groups, min_size);
  std::vector<double> weight(groups);
  for (auto& w : weight) w = std::pow(rng.uniform(), 3.0) + 1e-3;  // heavy tail
  std::size_t left = total - groups * min_size;
  while (left > 0) {
    double sum = 0;
    for (std::size_t g = 0; g < groups; ++g)
      if (sizes[g] < max_size) sum += weight[g];
    double u = rng.uniform() * sum;
    std::size_t pick = groups;
    for (std::size_t g = 0; g < groups; ++g) {
      if (sizes[g] >= max_size) continue;
      pick = g;
      u -= weight[g];
      if (u <= 0) break;
    }
    ++sizes[pick];
    --left;
  }
  return sizes;
}

// ---- ablation -------------------------------------------------------------------

const std::vector<AblationConfig>& ablation_matrix() {
  static const std::vector<AblationConfig> rows = [] {
    using R = Representation;
    using S = StructuralMode;
    auto make = [](std::string id, R rep, S st, bool sem, bool weight, Metric metric) {
      AblationConfig c;
      c.id = std::move(id);
      c.features.representation = rep;
      c.features.structural_mode = st;
      c.features.enable_z = st == S::kXYZ;
      c.features.enable_opcode_features = sem;
      c.features.cfg_size_weighting = weight;
      c.features.wl_rounds = 1;
      c.similarity.gamma = 5.0;
      c.similarity.tau = 0.9999;
      c.similarity.metric = metric;
      return c;
    };
    const auto C = Metric::kCosineOnly;
    const auto H = Metric::kHybrid;
    return std::vector<AblationConfig>{
        make("B1", R::kStringHash, S::kCentroid, false, false, C),
        make("B2", R::kStringHash, S::kXY, false, false, C),
        make("B3", R::kStringHash, S::kXYZ, false, false, C),
        make("N1", R::kNumerical, S::kCentroid, false, false, C),
        make("N2", R::kNumerical, S::kXY, false, false, C),
        make("N3", R::kNumerical, S::kXYZ, false, false, C),
        make("O1", R::kStringHash, S::kXY, true, false, C),
        make("O2", R::kStringHash, S::kXYZ, true, false, C),
        make("O3", R::kNumerical, S::kXY, true, false, C),
        make("O4", R::kNumerical, S::kXYZ, true, false, C),
        make("W1", R::kNumerical, S::kCentroid, false, true, C),
        make("W2", R::kNumerical, S::kXY, true, true, C),
        make("W3", R::kNumerical, S::kXYZ, true, true, C),
        make("H1", R::kNumerical, S::kXY, true, false, H),
        make("H2", R::kNumerical, S::kXYZ, true, false, H),
        make("H3", R::kNumerical, S::kXY, true, true, H),
        make("H4", R::kNumerical, S::kXYZ, true, true, H),
    };
  }();
  return rows;
}

const AblationConfig& ablation_config(std::string_view id) {
  for (const auto& c : ablation_matrix())
    if (c.id == id) return c;
  throw std::invalid_argument("unknown ablation config '" + std::string(id) + "'");
}

std::vector<LabeledScore> score_corpus(const LabeledCorpus& corpus, const AblationConfig& config,
                                       const TaxonomyTable& taxonomy, bool* partial) {
  const std::size_t n = corpus.samples.size();
  std::vector<SampleFeatures> feats;
  feats.reserve(n);
  bool any_fallback = false;
  for (const auto& s : corpus.samples) {
    feats.push_back(extract_sample(s, taxonomy, config.features));
    any_fallback = any_fallback || feats.back().z_fallback;
  }
  if (partial) *partial = any_fallback;

  std::vector<LabeledScore> scores;
  scores.reserve(n * (n - 1) / 2);
  if (config.features.representation == Representation::kStringHash) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        scores.push_back({histogram_cosine(feats[i].histogram, feats[j].histogram), corpus.duplicate_pair(i, j)});
    return scores;
  }
  std::vector<PreparedVectors> prepared;
  prepared.reserve(n);
  for (const auto& f : feats) prepared.emplace_back(f.global, config.similarity.metric);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      scores.push_back({prepared[i].similarity(prepared[j], config.similarity.gamma), corpus.duplicate_pair(i, j)});
  return scores;
}

AblationRow evaluate_config(const LabeledCorpus& corpus, const AblationConfig& config,
                            const std::vector<double>& thresholds, const TaxonomyTable& taxonomy) {
  const auto t0 = std::chrono::steady_clock::now();
  AblationRow row;
  row.config_id = config.id;
  const auto scores = score_corpus(corpus, config, taxonomy, &row.partial);
  row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  for (double t : thresholds) row.metrics.push_back({t, confusion_at(scores, t)});
  for (std::size_t i = 1; i < row.metrics.size(); ++i)
    if (row.metrics[i].confusion.f1() >= row.metrics[row.best].confusion.f1()) row.best = i;
  return row;
}

std::vector<AblationRow> run_ablation(const LabeledCorpus& corpus, const std::vector<AblationConfig>& configs,
                                      const std::vector<double>& thresholds, const TaxonomyTable& taxonomy) {
  std::vector<AblationRow> rows;
  for (const auto& c : configs) rows.push_back(evaluate_config(corpus, c, thresholds, taxonomy));
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "config_id,threshold,tp,fp,tn,fn,precision,recall,f1,wall_ms\n";
  char buf[256];
  for (const auto& r : rows)
    for (const auto& m : r.metrics) {
      const auto& c = m.confusion;
      std::snprintf(buf, sizeof buf, "%s,%.6f,%zu,%zu,%zu,%zu,%.4f,%.4f,%.4f,%.2f\n", r.config_id.c_str(), m.threshold,
                    c.tp, c.fp, c.tn, c.fn, c.precision(), c.recall(), c.f1(), r.wall_ms);
      out << buf;
    }
  return out.str();
}

}  // namespace clarity::eval

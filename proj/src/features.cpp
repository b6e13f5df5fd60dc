#include "claritykit/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace clarity {

std::string_view to_string(Representation r) noexcept {
  return r == Representation::kNumerical ? "numerical" : "string";
}

std::string_view to_string(StructuralMode m) noexcept {
  switch (m) {
    case StructuralMode::kXY: return "xy";
    case StructuralMode::kXYZ: return "xyz";
    case StructuralMode::kCentroid: return "centroid";
  }
  return "?";
}

void FeatureConfig::validate() const {
  if (structural_mode == StructuralMode::kXYZ && !enable_z)
    throw std::invalid_argument("structural_mode=xyz requires enable_z");
  if (z_timeout.count() <= 0) throw std::invalid_argument("z_timeout must be positive");
  if (!std::isfinite(c_offset)) throw std::invalid_argument("c_offset must be finite");
}

OpcodeCfgVector& OpcodeCfgVector::operator+=(const OpcodeCfgVector& o) {
  x += o.x;
  y += o.y;
  if (z || o.z) z = z.value_or(0.0) + o.z.value_or(0.0);
  for (std::size_t k = 0; k < kNumCategories; ++k) w[k] += o.w[k];
  omega += o.omega;
  return *this;
}

OpcodeCfgVector& OpcodeCfgVector::operator*=(double k) {
  x *= k;
  y *= k;
  if (z) *z *= k;
  for (auto& v : w) v *= k;
  omega *= k;
  return *this;
}

// ---- loop depth -----------------------------------------------------------

LoopDepths loop_depth_analysis(const ControlFlowGraph& cfg, std::uint64_t entry, std::chrono::nanoseconds timeout) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + timeout;
  LoopDepths out;
  const std::size_t n = cfg.blocks.size();
  const std::size_t root = cfg.index_of(entry);
  if (root == ControlFlowGraph::npos) throw std::invalid_argument("loop_depth_analysis: entry is not a block id");

  auto expired = [&] {
    if (Clock::now() < deadline) return false;
    out.timed_out = true;
    out.depth.clear();
    return true;
  };
  if (expired()) return out;

  std::unordered_map<std::uint64_t, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace(cfg.blocks[i].id, i);
  std::vector<std::vector<std::size_t>> succ(n), pred(n);
  for (const auto& [s, d] : cfg.edges) {
    auto a = pos.at(s), b = pos.at(d);
    succ[a].push_back(b);
    pred[b].push_back(a);
  }

  // Reverse postorder from the entry (iterative DFS).
  std::vector<std::size_t> postorder;
  std::vector<char> seen(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
  seen[root] = 1;
  while (!stack.empty()) {
    auto& [v, next] = stack.back();
    if (next < succ[v].size()) {
      auto w = succ[v][next++];
      if (!seen[w]) {
        seen[w] = 1;
        stack.emplace_back(w, 0);
      }
    } else {
      postorder.push_back(v);
      stack.pop_back();
    }
  }
  constexpr std::size_t kUndef = static_cast<std::size_t>(-1);
  std::vector<std::size_t> po_num(n, kUndef);
  for (std::size_t i = 0; i < postorder.size(); ++i) po_num[postorder[i]] = i;

  // Cooper, Harvey & Kennedy iterative dominators.
  std::vector<std::size_t> idom(n, kUndef);
  idom[root] = root;
  auto intersect = [&](std::size_t a, std::size_t b) {
    while (a != b) {
      while (po_num[a] < po_num[b]) a = idom[a];
      while (po_num[b] < po_num[a]) b = idom[b];
    }
    return a;
  };
  for (bool changed = true; changed;) {
    if (expired()) return out;
    changed = false;
    for (auto it = postorder.rbegin(); it != postorder.rend(); ++it) {
      auto v = *it;
      if (v == root) continue;
      std::size_t nd = kUndef;
      for (auto p : pred[v]) {
        if (idom[p] == kUndef) continue;
        nd = nd == kUndef ? p : intersect(p, nd);
      }
      if (nd != idom[v]) {
        idom[v] = nd;
        changed = true;
      }
    }
  }
  auto dominates = [&](std::size_t h, std::size_t v) {
    for (;;) {
      if (v == h) return true;
      if (v == root) return false;
      v = idom[v];
    }
  };

  // Natural loops, merged per header.
  std::map<std::size_t, std::set<std::size_t>> loops;
  for (std::size_t u = 0; u < n; ++u) {
    if (po_num[u] == kUndef) continue;
    for (auto h : succ[u]) {
      if (!dominates(h, u)) continue;
      if (expired()) return out;
      auto& body = loops[h];
      body.insert(h);
      std::vector<std::size_t> work;
      if (body.insert(u).second) work.push_back(u);
      while (!work.empty()) {
        auto v = work.back();
        work.pop_back();
        for (auto p : pred[v])
          if (po_num[p] != kUndef && body.insert(p).second) work.push_back(p);
      }
    }
  }
  out.depth.assign(n, 0);
  for (const auto& [header, body] : loops)
    for (auto v : body) ++out.depth[v];
  return out;
}

// ---- per-function vectors -------------------------------------------------

namespace {

LoopDepths depths_for(const FunctionRecord& fn, const FeatureConfig& cfg) {
  const auto& blocks = fn.cfg.blocks;
  if (std::all_of(blocks.begin(), blocks.end(), [](const BasicBlock& b) { return b.loop_depth.has_value(); })) {
    LoopDepths d;
    for (const auto& b : blocks) d.depth.push_back(*b.loop_depth);
    return d;
  }
  return loop_depth_analysis(fn.cfg, blocks.front().id, cfg.z_timeout);
}

}  // namespace

OpcodeCfgVector function_opcode_cfg(const FunctionRecord& fn, const TaxonomyTable& taxonomy, const FeatureConfig& cfg,
                                    const LoopDepths* loop_depths) {
  const auto& blocks = fn.cfg.blocks;
  if (blocks.empty()) throw std::invalid_argument("function " + fn.function_id + " has no blocks");

  const std::size_t n = blocks.size();
  std::unordered_map<std::uint64_t, std::size_t> pos;
  pos.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pos.emplace(blocks[i].id, i);
  const auto deg = fn.cfg.out_degrees();
  std::vector<CategoryCounts> cats(n);
  for (std::size_t i = 0; i < n; ++i) cats[i] = block_category_counts(blocks[i], taxonomy);
  const bool have_depth = loop_depths && !loop_depths->timed_out && loop_depths->depth.size() == n;
  auto ldt = [&](std::size_t i) { return have_depth ? static_cast<double>(loop_depths->depth[i]) : 0.0; };

  OpcodeCfgVector v;
  if (cfg.structural_mode == StructuralMode::kCentroid) {
    // Instruction-weighted node centroid (id, out-degree, loop depth).
    double mass = 0, cx = 0, cy = 0, cz = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = static_cast<double>(blocks[i].size());
      mass += m;
      cx += m * static_cast<double>(blocks[i].id);
      cy += m * deg[i];
      cz += m * ldt(i);
    }
    if (mass > 0) {
      v.x = cx / mass + cfg.c_offset;
      v.y = cy / mass;
      v.z = cz / mass;
    } else {
      v.x = static_cast<double>(blocks.front().id) + cfg.c_offset;
      v.y = deg.front();
      v.z = ldt(0);
    }
    v.omega = mass;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < kNumCategories; ++k) v.w[k] += static_cast<double>(cats[i][k]);
    return v;
  }

  double omega = 0, sx = 0, sy = 0, sz = 0;
  for (const auto& [s, d] : fn.cfg.edges) {
    const auto a = pos.at(s), b = pos.at(d);
    const double na = static_cast<double>(blocks[a].size()), nb = static_cast<double>(blocks[b].size());
    omega += na + nb;
    sx += na * static_cast<double>(blocks[a].id) + nb * static_cast<double>(blocks[b].id);
    sy += na * deg[a] + nb * deg[b];
    sz += na * ldt(a) + nb * ldt(b);
    for (std::size_t k = 0; k < kNumCategories; ++k)
      v.w[k] += static_cast<double>(cats[a][k] + cats[b][k]);
  }
  if (fn.cfg.edges.empty() || omega == 0.0) {
    // Single-node limit: the entry block stands for the whole function.
    const auto& e = blocks.front();
    v.omega = static_cast<double>(e.size());
    v.x = static_cast<double>(e.id) + cfg.c_offset;
    v.y = 0.0;
    for (std::size_t k = 0; k < kNumCategories; ++k) v.w[k] = static_cast<double>(cats[0][k]);
    if (cfg.enable_z && have_depth) v.z = ldt(0);
    return v;
  }
  v.omega = omega;
  v.x = sx / omega + cfg.c_offset;
  v.y = sy / omega;
  if (cfg.enable_z && have_depth) v.z = sz / omega;
  return v;
}

OpcodeCfgVector function_opcode_cfg(const FunctionRecord& fn, const TaxonomyTable& taxonomy, const FeatureConfig& cfg,
                                    bool* z_timed_out) {
  if (!cfg.needs_loop_depth()) return function_opcode_cfg(fn, taxonomy, cfg, static_cast<const LoopDepths*>(nullptr));
  if (fn.cfg.blocks.empty()) throw std::invalid_argument("function " + fn.function_id + " has no blocks");
  const auto depths = depths_for(fn, cfg);
  if (z_timed_out) *z_timed_out = depths.timed_out;
  return function_opcode_cfg(fn, taxonomy, cfg, &depths);
}

// ---- propagation and aggregation ------------------------------------------

std::vector<NodeFeature> wl_propagate(const SampleRecord& sample, const std::vector<OpcodeCfgVector>& per_fn,
                                      const FeatureConfig& cfg) {
  const std::size_t n = sample.functions.size();
  if (per_fn.size() != n) throw std::invalid_argument("wl_propagate: per-function vectors do not cover the FCG");

  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos.emplace(sample.functions[i].function_id, i);
  std::set<std::pair<std::size_t, std::size_t>> undirected;
  for (const auto& [caller, callee] : sample.fcg_edges) {
    auto a = pos.at(caller), b = pos.at(callee);
    if (a == b) continue;
    undirected.emplace(std::min(a, b), std::max(a, b));
  }
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [a, b] : undirected) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  std::vector<NodeFeature> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto v0 = per_fn[i];
    if (cfg.cfg_size_weighting) v0 *= static_cast<double>(sample.functions[i].cfg_size());
    nodes[i].blocks.reserve(cfg.wl_rounds + 1);
    nodes[i].blocks.push_back(v0);
  }
  for (std::uint32_t k = 1; k <= cfg.wl_rounds; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      OpcodeCfgVector acc;
      if (per_fn[i].z) acc.z = 0.0;
      for (auto j : adj[i]) acc += nodes[j].blocks[k - 1];
      nodes[i].blocks.push_back(acc);
    }
  }
  return nodes;
}

GlobalVectors build_global_vectors(const std::vector<NodeFeature>& nodes, const FeatureConfig& cfg) {
  if (nodes.empty()) throw std::invalid_argument("build_global_vectors: no nodes");
  const std::size_t rounds = cfg.wl_rounds + 1;
  bool has_z = cfg.struct_stride() == 3;
  if (cfg.structural_mode == StructuralMode::kXYZ)
    for (const auto& node : nodes)
      if (!node.blocks.front().z) has_z = false;

  GlobalVectors g;
  g.struct_stride = has_z ? 3 : 2;
  g.v_struct.assign(g.struct_stride * rounds, 0.0);
  if (cfg.enable_opcode_features) g.v_sem.assign(kNumCategories * rounds, 0.0);
  for (const auto& node : nodes) {
    if (node.blocks.size() != rounds) throw std::invalid_argument("build_global_vectors: node has wrong block count");
    for (std::size_t k = 0; k < rounds; ++k) {
      const auto& b = node.blocks[k];
      g.v_struct[g.struct_stride * k] += b.x;
      g.v_struct[g.struct_stride * k + 1] += b.y;
      if (has_z) g.v_struct[g.struct_stride * k + 2] += b.z.value_or(0.0);
      if (cfg.enable_opcode_features)
        for (std::size_t c = 0; c < kNumCategories; ++c) g.v_sem[kNumCategories * k + c] += b.w[c];
    }
  }
  return g;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void append_number(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g,", v);
  out += buf;
}

}  // namespace

LabelHistogram string_hash_features(const std::vector<NodeFeature>& nodes, const FeatureConfig& cfg) {
  LabelHistogram hist;
  for (const auto& node : nodes) {
    std::string canon;
    for (const auto& b : node.blocks) {
      canon += '[';
      append_number(canon, b.x);
      append_number(canon, b.y);
      if (cfg.struct_stride() == 3) append_number(canon, b.z.value_or(0.0));
      if (cfg.enable_opcode_features)
        for (double w : b.w) append_number(canon, w);
      canon += ']';
    }
    hist[fnv1a(canon)] += 1.0;
  }
  return hist;
}

double histogram_cosine(const LabelHistogram& a, const LabelHistogram& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [k, v] : a) {
    na += v * v;
    if (auto it = b.find(k); it != b.end()) dot += v * it->second;
  }
  for (const auto& [k, v] : b) nb += v * v;
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

SampleFeatures extract_sample(const SampleRecord& sample, const TaxonomyTable& taxonomy, const FeatureConfig& cfg) {
  cfg.validate();
  if (!sample.is_executable())
    throw std::invalid_argument("sample " + sample.sha256 + " has no functions (metadata-only record)");
  SampleFeatures out;
  out.sha256 = sample.sha256;
  out.first_seen = sample.first_seen;
  out.org_labels = sample.org_labels;
  out.functions.reserve(sample.functions.size());
  for (const auto& fn : sample.functions) {
    bool timed_out = false;
    out.functions.push_back(function_opcode_cfg(fn, taxonomy, cfg, &timed_out));
    out.z_fallback = out.z_fallback || timed_out;
  }
  const auto nodes = wl_propagate(sample, out.functions, cfg);
  out.global = build_global_vectors(nodes, cfg);
  if (cfg.representation == Representation::kStringHash) out.histogram = string_hash_features(nodes, cfg);
  return out;
}

}  // namespace clarity

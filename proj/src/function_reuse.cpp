#include "claritykit/function_reuse.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <thread>

#include "claritykit/ann_index.hpp"
#include "claritykit/dedup.hpp"
#include "claritykit/digest.hpp"
#include "claritykit/disjoint_set.hpp"

namespace clarity {

namespace {

template <std::size_t N>
std::array<double, N> unit(const std::array<double, N>& v) {
  double n2 = 0;
  for (double x : v) n2 += x * x;
  auto out = v;
  if (n2 > 0) {
    const double n = std::sqrt(n2);
    for (auto& x : out) x /= n;
  }
  return out;
}

constexpr std::size_t kAnnDim = 2 + kNumCategories;

// Unit-normalized [v_struct_unit | v_sem].
std::array<double, kAnnDim> ann_point(const FunctionVectors& v) {
  std::array<double, kAnnDim> p{};
  std::copy(v.v_struct_unit.begin(), v.v_struct_unit.end(), p.begin());
  std::copy(v.v_sem.begin(), v.v_sem.end(), p.begin() + 2);
  return unit(p);
}

}  // namespace

FunctionVectors FunctionVectors::from(const OpcodeCfgVector& v) {
  FunctionVectors f;
  f.v_struct = {v.x, v.y};
  f.v_struct_unit = unit(f.v_struct);
  f.v_sem = unit(v.w);
  return f;
}

FunctionSummary FunctionSummary::from(const FunctionRecord& fn, std::size_t max_mnemonics) {
  FunctionSummary s;
  std::vector<const BasicBlock*> ordered;
  for (const auto& b : fn.cfg.blocks) {
    s.blocks.emplace_back(b.id, static_cast<std::uint32_t>(b.size()));
    ordered.push_back(&b);
  }
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::sort(s.blocks.begin(), s.blocks.end());
  s.edges = fn.cfg.edges;
  for (const auto* b : ordered)
    for (const auto& in : b->instructions) {
      if (s.asm_summary.size() >= max_mnemonics) return s;
      s.asm_summary.push_back(in.mnemonic);
    }
  return s;
}

std::vector<FunctionRecord> filter_trivial(std::vector<FunctionRecord> fns) {
  std::erase_if(fns, [](const FunctionRecord& f) { return is_trivial(f); });
  return fns;
}

double function_similarity(const FunctionVectors& f, const FunctionVectors& g, double gamma) {
  const double dx = f.v_struct[0] - g.v_struct[0], dy = f.v_struct[1] - g.v_struct[1];
  const double sim_struct = std::exp(-gamma * (dx * dx + dy * dy));
  double fz = 0, gz = 0, dot = 0;
  for (std::size_t k = 0; k < kNumCategories; ++k) {
    fz += f.v_sem[k] * f.v_sem[k];
    gz += g.v_sem[k] * g.v_sem[k];
    dot += f.v_sem[k] * g.v_sem[k];
  }
  double sim_sem;
  if (fz == 0 && gz == 0) sim_sem = 1.0;
  else if (fz == 0 || gz == 0) sim_sem = 0.0;
  else sim_sem = dot / std::sqrt(fz * gz);  // exactly 1 for identical inputs
  return std::clamp(sim_struct * sim_sem, 0.0, 1.0);
}

std::map<std::string, std::size_t> org_distribution(const std::vector<std::string>& member_orgs) {
  std::map<std::string, std::size_t> d;
  for (const auto& o : member_orgs) ++d[o];
  return d;
}

std::string cluster_id_for(std::vector<FunctionKey> members) {
  std::sort(members.begin(), members.end());
  std::string canon;
  for (const auto& k : members)
    canon += k.sample_sha256 + ':' + k.function_id + ':' + std::to_string(k.start_address) + '\n';
  return sha256_hex(canon).substr(0, 16);
}

ClusteringResult cluster_functions(const std::vector<FunctionItem>& items, const ClusterParams& params) {
  const std::size_t n = items.size();
  ClusteringResult result;
  DisjointSet dsu(n);

  std::vector<std::array<double, kAnnDim>> points(n);
  for (std::size_t i = 0; i < n; ++i) points[i] = ann_point(items[i].vectors);

  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;
  const unsigned workers = resolve_workers(0);

  while (result.rounds < params.ann.max_rounds && active.size() >= 2) {
    ++result.rounds;
    std::vector<double> flat;
    flat.reserve(active.size() * kAnnDim);
    for (auto i : active) flat.insert(flat.end(), points[i].begin(), points[i].end());
    const std::size_t nlist = params.ann.exhaustive ? 1 : params.ann.nlist;
    const IvfIndex index(std::move(flat), kAnnDim, nlist, params.ann.seed + result.rounds);
    const std::size_t limit = active.size() - 1;
    const std::size_t kk = params.ann.exhaustive ? limit : std::min(params.ann.k, limit);
    const std::size_t nprobe = params.ann.exhaustive ? index.nlist() : params.ann.nprobe;

    // Query phase (parallel, read-only), then a sequential union phase.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> found(active.size());
    std::vector<char> saturated(active.size(), 0);
    auto query = [&](std::size_t from, std::size_t step) {
      for (std::size_t a = from; a < active.size(); a += step) {
        const auto self = active[a];
        std::size_t returned = 0, matched = 0;
        for (const auto& hit : index.search(points[self], kk + 1, nprobe)) {
          const auto other = active[hit.id];
          if (other == self || returned == kk) continue;
          ++returned;
          if (function_similarity(items[self].vectors, items[other].vectors, params.gamma) >= params.tau) {
            ++matched;
            found[a].emplace_back(std::min(self, other), std::max(self, other));
          }
        }
        saturated[a] = returned == kk && matched == returned && kk < limit;
      }
    };
    const unsigned nthreads = std::min<std::size_t>(workers, active.size());
    if (nthreads <= 1) {
      query(0, 1);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(query, t, nthreads);
    }

    std::set<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& f : found) edges.insert(f.begin(), f.end());
    std::set<std::size_t> grown_roots;
    for (const auto& [a, b] : edges)
      if (dsu.unite(a, b)) {
        result.union_edges.emplace_back(a, b);
        grown_roots.insert(a);
      }

    std::size_t clustered = 0;
    for (std::size_t i = 0; i < n; ++i) clustered += dsu.set_size(i) > 1;
    result.clustered_per_round.push_back(clustered);
    if (grown_roots.empty()) break;

    std::set<std::size_t> grown;
    for (auto r : grown_roots) grown.insert(dsu.find(r));
    std::vector<std::size_t> next;
    std::set<std::size_t> represented;
    for (std::size_t a = 0; a < active.size(); ++a) {
      const auto i = active[a];
      const auto root = dsu.find(i);
      if (saturated[a]) next.push_back(i);
      else if (grown.count(root) && represented.insert(root).second) next.push_back(i);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    active = std::move(next);
  }

  for (const auto& group : dsu.groups()) {
    if (group.size() < std::max<std::size_t>(params.min_cluster_size, 1)) continue;
    FunctionReuseCluster c;
    c.size = group.size();
    std::vector<std::string> orgs;
    auto rep = group.front();
    for (auto m : group) {
      c.members.push_back(items[m].key);
      orgs.push_back(items[m].org);
      const auto& a = items[m];
      const auto& b = items[rep];
      if (a.cfg_size > b.cfg_size ||
          (a.cfg_size == b.cfg_size &&
           std::tie(a.key.sample_sha256, a.key.start_address) < std::tie(b.key.sample_sha256, b.key.start_address)))
        rep = m;
    }
    std::sort(c.members.begin(), c.members.end());
    c.org_distribution = org_distribution(orgs);
    c.cross_org = c.org_distribution.size() >= 2;
    c.representative = items[rep].key;
    c.representative_summary = items[rep].summary;
    c.cluster_id = cluster_id_for(c.members);
    result.clusters.push_back(std::move(c));
  }
  std::sort(result.clusters.begin(), result.clusters.end(),
            [](const auto& a, const auto& b) { return a.cluster_id < b.cluster_id; });
  return result;
}

std::vector<FunctionItem> function_items(const SampleRecord& sample, const TaxonomyTable& taxonomy,
                                         const std::string& org, double c_offset) {
  FeatureConfig plain;
  plain.c_offset = c_offset;
  std::vector<FunctionItem> out;
  for (const auto& fn : sample.functions) {
    if (is_trivial(fn)) continue;
    FunctionItem item;
    item.key = {sample.sha256, fn.function_id, fn.start_address};
    item.vectors = FunctionVectors::from(function_opcode_cfg(fn, taxonomy, plain));
    item.org = org;
    item.cfg_size = fn.cfg_size();
    item.summary = FunctionSummary::from(fn);
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace clarity

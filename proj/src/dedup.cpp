#include "claritykit/dedup.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <thread>

#include "claritykit/disjoint_set.hpp"

namespace clarity {

unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CLARITY_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<ScoredPair> score_pairs_above(const std::vector<DedupItem>& items, const DedupOptions& options) {
  options.similarity.validate();
  const std::size_t n = items.size();
  std::vector<PreparedVectors> prepared;
  prepared.reserve(n);
  for (const auto& it : items) prepared.emplace_back(it.vectors, options.similarity.metric);

  const unsigned workers = std::min<unsigned>(resolve_workers(options.workers), std::max<std::size_t>(n, 1));
  std::vector<std::vector<ScoredPair>> partial(workers);
  auto work = [&](unsigned w) {
    // Row-interleaved so that the triangular workload spreads evenly.
    for (std::size_t i = w; i < n; i += workers)
      for (std::size_t j = i + 1; j < n; ++j) {
        if (options.within_label && items[i].label != items[j].label) continue;
        const double s = prepared[i].similarity(prepared[j], options.similarity.gamma);
        if (s >= options.similarity.tau) partial[w].push_back({i, j, s});
      }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  std::vector<ScoredPair> all;
  for (auto& p : partial) all.insert(all.end(), p.begin(), p.end());
  std::sort(all.begin(), all.end(), [](const ScoredPair& a, const ScoredPair& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return all;
}

DuplicateClusters dedup(const std::vector<DedupItem>& items, const DedupOptions& options) {
  const auto pairs = score_pairs_above(items, options);
  DisjointSet dsu(items.size());
  for (const auto& p : pairs) dsu.unite(p.i, p.j);

  DuplicateClusters out;
  out.pairs_scored = items.size() < 2 ? 0 : items.size() * (items.size() - 1) / 2;
  for (const auto& group : dsu.groups()) {
    auto best = group.front();
    for (auto m : group) {
      const auto a = std::chrono::sys_days{items[m].first_seen}, b = std::chrono::sys_days{items[best].first_seen};
      if (a < b || (a == b && items[m].sha256 < items[best].sha256)) best = m;
    }
    DuplicateCluster c;
    c.representative = items[best].sha256;
    const PreparedVectors rep(items[best].vectors, options.similarity.metric);
    for (auto m : group) {
      c.members.push_back(items[m].sha256);
      if (m == best) continue;
      const PreparedVectors other(items[m].vectors, options.similarity.metric);
      out.ledger.push_back({items[m].sha256, c.representative, rep.similarity(other, options.similarity.gamma)});
    }
    std::sort(c.members.begin(), c.members.end());
    out.clusters.push_back(std::move(c));
  }
  std::sort(out.clusters.begin(), out.clusters.end(),
            [](const auto& a, const auto& b) { return a.representative < b.representative; });
  std::sort(out.ledger.begin(), out.ledger.end(),
            [](const auto& a, const auto& b) { return a.removed_hash < b.removed_hash; });
  return out;
}

PairConfusion confusion_at(const std::vector<LabeledScore>& pairs, double threshold) {
  PairConfusion c;
  for (const auto& p : pairs) {
    const bool predicted = p.score >= threshold;
    if (predicted && p.duplicate) ++c.tp;
    else if (predicted) ++c.fp;
    else if (p.duplicate) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::optional<Calibration> calibrate_threshold(const std::vector<LabeledScore>& pairs, std::vector<double> candidates) {
  if (candidates.empty())
    for (const auto& p : pairs) candidates.push_back(p.score);
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::optional<Calibration> best;
  for (double t : candidates) {
    const auto c = confusion_at(pairs, t);
    if (c.tp == 0 || c.fp != 0) continue;
    if (!best || c.f1() >= best->confusion.f1()) best = Calibration{t, c};
  }
  return best;
}

}  // namespace clarity

#include "claritykit/qc.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include <boost/math/distributions/beta.hpp>

namespace clarity::qc {

double gini_impurity(const LabelCounts& counts) {
  std::uint64_t total = 0;
  for (const auto& [l, c] : counts) total += c;
  if (total == 0) return 0.0;
  double sum_sq = 0;
  for (const auto& [l, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return std::max(0.0, 1.0 - sum_sq);
}

Consensus gini_consensus(const LabelCounts& counts, double threshold) {
  Consensus out;
  out.gini = gini_impurity(counts);
  std::uint64_t best = 0;
  std::size_t at_best = 0;
  const std::string* label = nullptr;
  for (const auto& [l, c] : counts) {
    if (c > best) {
      best = c;
      at_best = 1;
      label = &l;
    } else if (c == best) {
      ++at_best;
    }
  }
  // Tolerance for the rounding in 1 - sum p^2 at the boundary.
  if (best > 0 && at_best == 1 && out.gini <= threshold + 1e-12) out.label = *label;
  return out;
}

Consensus label_consensus(const std::vector<OrgLabel>& labels, double threshold) {
  LabelCounts counts;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& l : labels)
    if (seen.emplace(l.label, l.source).second) ++counts[l.label];
  return gini_consensus(counts, threshold);
}

Diversity diversity(const LabelCounts& dist) {
  Diversity d;
  std::uint64_t total = 0;
  for (const auto& [k, c] : dist)
    if (c > 0) {
      total += c;
      ++d.categories;
    }
  if (total == 0) throw std::invalid_argument("diversity: no category with a positive count");
  for (const auto& [k, c] : dist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    d.entropy -= p * std::log(p);
    d.hhi += p * p;
  }
  d.h_norm = d.categories >= 2 ? d.entropy / std::log(static_cast<double>(d.categories)) : 0.0;
  return d;
}

// ---- sampling ---------------------------------------------------------------

std::uint64_t tier_allocation(std::uint64_t size) {
  auto pct = [&](double rate) { return static_cast<std::uint64_t>(std::llround(rate * static_cast<double>(size))); };
  std::uint64_t n;
  if (size <= 5) n = size;
  else if (size <= 20) n = std::max<std::uint64_t>(pct(0.50), 5);
  else if (size <= 100) n = std::max<std::uint64_t>(pct(0.30), 10);
  else if (size <= 500) n = std::max<std::uint64_t>(pct(0.15), 30);
  else n = std::clamp<std::uint64_t>(pct(0.08), 75, 120);
  return std::min(n, size);
}

std::uint64_t SamplingPlan::total() const noexcept {
  std::uint64_t t = 0;
  for (const auto& [o, n] : allocation) t += n;
  return t;
}

SamplingPlan sampling_plan(const std::map<std::string, std::uint64_t>& org_sizes, std::uint64_t seed) {
  SamplingPlan plan;
  plan.seed = seed;
  for (const auto& [org, size] : org_sizes) {
    if (size == 0) throw std::invalid_argument("sampling_plan: organization '" + org + "' has no samples");
    plan.allocation[org] = tier_allocation(size);
  }
  return plan;
}

Era era_of(Date d) noexcept {
  const int y = static_cast<int>(d.year());
  if (y < 2015) return Era::kBefore2015;
  if (y <= 2019) return Era::k2015To2019;
  return Era::k2020On;
}

namespace {

// Fisher-Yates with an explicit bounded draw so results do not depend on the
// standard library's distribution implementations.
void seeded_shuffle(std::vector<std::string>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    std::swap(v[i - 1], v[r % bound]);
  }
}

std::uint64_t org_seed(std::uint64_t seed, const std::string& org) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (unsigned char c : org) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::map<std::string, std::vector<std::string>> select_samples(const SamplingPlan& plan,
                                                               const std::vector<SamplingUnit>& units) {
  std::map<std::string, std::array<std::vector<std::string>, 3>> strata;
  for (const auto& u : units) strata[u.org][static_cast<std::size_t>(era_of(u.first_seen))].push_back(u.sha256);

  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [org, want] : plan.allocation) {
    auto it = strata.find(org);
    if (it == strata.end()) continue;
    auto& eras = it->second;
    std::size_t total = 0;
    for (auto& e : eras) {
      std::sort(e.begin(), e.end());
      total += e.size();
    }
    const std::size_t take = std::min<std::size_t>(want, total);

    // Largest-remainder split of `take` proportional to era sizes.
    std::array<std::size_t, 3> quota{};
    std::array<double, 3> rem{};
    std::size_t assigned = 0;
    for (std::size_t e = 0; e < 3; ++e) {
      const double exact = total == 0 ? 0.0 : double(take) * double(eras[e].size()) / double(total);
      quota[e] = static_cast<std::size_t>(std::floor(exact));
      rem[e] = exact - double(quota[e]);
      assigned += quota[e];
    }
    while (assigned < take) {
      std::size_t best = 3;
      for (std::size_t e = 0; e < 3; ++e)
        if (quota[e] < eras[e].size() && (best == 3 || rem[e] > rem[best])) best = e;
      ++quota[best];
      rem[best] = -1;
      ++assigned;
    }

    std::mt19937_64 rng(org_seed(plan.seed, org));
    auto& picked = out[org];
    for (std::size_t e = 0; e < 3; ++e) {
      auto pool = eras[e];
      seeded_shuffle(pool, rng);
      picked.insert(picked.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(quota[e]));
    }
    std::sort(picked.begin(), picked.end());
  }
  return out;
}

// ---- accuracy and agreement -----------------------------------------------

AccuracyReport clopper_pearson(std::uint64_t s, std::uint64_t n, double confidence) {
  if (n == 0) throw std::invalid_argument("clopper_pearson: n must be >= 1");
  if (s > n) throw std::invalid_argument("clopper_pearson: successes exceed trials");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("clopper_pearson: confidence in (0, 1)");
  AccuracyReport r;
  r.n = n;
  r.s = s;
  r.confidence = confidence;
  r.point = static_cast<double>(s) / static_cast<double>(n);
  const double alpha = 1.0 - confidence;
  const double sd = static_cast<double>(s), nd = static_cast<double>(n);
  using boost::math::beta_distribution;
  r.ci_low = s == 0 ? 0.0 : boost::math::quantile(beta_distribution<double>(sd, nd - sd + 1.0), alpha / 2.0);
  r.ci_high = s == n ? 1.0 : boost::math::quantile(beta_distribution<double>(sd + 1.0, nd - sd), 1.0 - alpha / 2.0);
  return r;
}

double cohen_kappa(const std::vector<std::vector<double>>& table) {
  const std::size_t k = table.size();
  if (k == 0) throw std::invalid_argument("cohen_kappa: empty table");
  double total = 0, agree = 0;
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (table[i].size() != k) throw std::invalid_argument("cohen_kappa: table must be square");
    for (std::size_t j = 0; j < k; ++j) {
      if (table[i][j] < 0) throw std::invalid_argument("cohen_kappa: negative count");
      total += table[i][j];
      rows[i] += table[i][j];
      cols[j] += table[i][j];
    }
    agree += table[i][i];
  }
  if (total <= 0) throw std::invalid_argument("cohen_kappa: no ratings");
  const double po = agree / total;
  double pe = 0;
  for (std::size_t i = 0; i < k; ++i) pe += (rows[i] / total) * (cols[i] / total);
  if (pe >= 1.0) return 1.0;  // a single category used by both raters
  return (po - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<std::vector<double>>& ratings) {
  const std::size_t items = ratings.size();
  if (items == 0) throw std::invalid_argument("fleiss_kappa: no items");
  const std::size_t k = ratings.front().size();
  double raters = -1;
  std::vector<double> col(k, 0.0);
  double p_bar = 0;
  for (const auto& row : ratings) {
    if (row.size() != k) throw std::invalid_argument("fleiss_kappa: ragged rating matrix");
    const double n = std::accumulate(row.begin(), row.end(), 0.0);
    if (raters < 0) raters = n;
    if (n != raters) throw std::invalid_argument("fleiss_kappa: items have different rater counts");
    if (n < 2) throw std::invalid_argument("fleiss_kappa: need at least two raters per item");
    double sq = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j] < 0) throw std::invalid_argument("fleiss_kappa: negative count");
      sq += row[j] * row[j];
      col[j] += row[j];
    }
    p_bar += (sq - n) / (n * (n - 1));
  }
  p_bar /= static_cast<double>(items);
  double pe = 0;
  for (double c : col) {
    const double p = c / (static_cast<double>(items) * raters);
    pe += p * p;
  }
  if (pe >= 1.0) return 1.0;
  return (p_bar - pe) / (1.0 - pe);
}

}  // namespace clarity::qc

#include "claritykit/ann_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace clarity {

double squared_l2(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

IvfIndex::IvfIndex(std::vector<double> points, std::size_t dim, std::size_t nlist, std::uint64_t seed)
    : points_(std::move(points)), dim_(dim) {
  if (dim_ == 0 || points_.size() % dim_ != 0) throw std::invalid_argument("IvfIndex: bad point matrix");
  const std::size_t n = size();
  if (n == 0) return;
  if (nlist == 0) nlist = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  nlist = std::clamp<std::size_t>(nlist, 1, n);

  // k-means++ seeding, then a few Lloyd iterations.
  std::mt19937_64 rng(seed);
  auto uniform = [&](double hi) { return static_cast<double>(rng() >> 11) * 0x1.0p-53 * hi; };
  std::vector<std::size_t> chosen{static_cast<std::size_t>(rng() % n)};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < nlist) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_l2(point(i), point(chosen.back())));
      total += nearest[i];
    }
    if (total == 0) break;  // fewer distinct points than lists
    double r = uniform(total);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= nearest[i];
      if (r <= 0) {
        pick = i;
        break;
      }
    }
    chosen.push_back(pick);
  }
  nlist = chosen.size();
  centroids_.resize(nlist * dim_);
  for (std::size_t c = 0; c < nlist; ++c)
    std::copy_n(points_.begin() + static_cast<std::ptrdiff_t>(chosen[c] * dim_), dim_,
                centroids_.begin() + static_cast<std::ptrdiff_t>(c * dim_));

  std::vector<std::size_t> assign(n, 0);
  auto centroid = [&](std::size_t c) { return std::span<const double>(centroids_.data() + c * dim_, dim_); };
  for (int iter = 0; iter < 8; ++iter) {
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < nlist; ++c) {
        const double d = squared_l2(point(i), centroid(c));
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      moved = moved || assign[i] != best || iter == 0;
      assign[i] = best;
    }
    if (!moved) break;
    std::vector<double> sum(nlist * dim_, 0.0);
    std::vector<std::size_t> cnt(nlist, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++cnt[assign[i]];
      for (std::size_t d = 0; d < dim_; ++d) sum[assign[i] * dim_ + d] += points_[i * dim_ + d];
    }
    for (std::size_t c = 0; c < nlist; ++c)
      if (cnt[c] > 0)
        for (std::size_t d = 0; d < dim_; ++d) centroids_[c * dim_ + d] = sum[c * dim_ + d] / double(cnt[c]);
  }
  lists_.assign(nlist, {});
  for (std::size_t i = 0; i < n; ++i) lists_[assign[i]].push_back(i);
}

std::vector<IvfIndex::Hit> IvfIndex::search(std::span<const double> query, std::size_t k, std::size_t nprobe) const {
  if (query.size() != dim_) throw std::invalid_argument("IvfIndex::search: query dimension mismatch");
  std::vector<Hit> hits;
  if (lists_.empty() || k == 0) return hits;
  nprobe = std::clamp<std::size_t>(nprobe, 1, lists_.size());

  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(lists_.size());
  for (std::size_t c = 0; c < lists_.size(); ++c)
    order.emplace_back(squared_l2(query, std::span<const double>(centroids_.data() + c * dim_, dim_)), c);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nprobe), order.end());

  for (std::size_t p = 0; p < nprobe; ++p)
    for (auto id : lists_[order[p].second]) hits.push_back({id, squared_l2(query, point(id))});
  auto by_dist = [](const Hit& a, const Hit& b) { return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.id < b.id; };
  if (hits.size() > k) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), by_dist);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), by_dist);
  }
  return hits;
}

}  // namespace clarity

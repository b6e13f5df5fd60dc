#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace clarity {

/// Inverted-file L2 index: points are bucketed by nearest k-means centroid
/// and a query scans the `nprobe` closest buckets. Probing every bucket
/// makes search exact.
class IvfIndex {
public:
  struct Hit {
    std::size_t id;  // position in the point set passed to build()
    double dist2;
  };

  /// `points` is row-major with `dim` columns. nlist = 0 picks ceil(sqrt(n)).
  IvfIndex(std::vector<double> points, std::size_t dim, std::size_t nlist, std::uint64_t seed);

  /// Up to k nearest points by squared L2 distance, ascending (ties by id).
  std::vector<Hit> search(std::span<const double> query, std::size_t k, std::size_t nprobe) const;

  std::size_t size() const noexcept { return dim_ == 0 ? 0 : points_.size() / dim_; }
  std::size_t nlist() const noexcept { return lists_.size(); }

private:
  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dim_, dim_}; }

  std::vector<double> points_;
  std::size_t dim_;
  std::vector<double> centroids_;
  std::vector<std::vector<std::size_t>> lists_;
};

double squared_l2(std::span<const double> a, std::span<const double> b);

}  // namespace clarity

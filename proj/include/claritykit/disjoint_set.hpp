#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace clarity {

/// Union-find with path halving and union by size.
class DisjointSet {
public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  /// Returns true if x and y were in different sets.
  bool unite(std::size_t x, std::size_t y) {
    x = find(x);
    y = find(y);
    if (x == y) return false;
    if (size_[x] < size_[y]) std::swap(x, y);
    parent_[y] = x;
    size_[x] += size_[y];
    return true;
  }

  bool same(std::size_t x, std::size_t y) { return find(x) == find(y); }
  std::size_t set_size(std::size_t x) { return size_[find(x)]; }
  std::size_t size() const noexcept { return parent_.size(); }

  /// Members grouped by set; groups ordered by smallest member, members ascending.
  std::vector<std::vector<std::size_t>> groups() {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> slot(parent_.size(), static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < parent_.size(); ++i) {
      auto r = find(i);
      if (slot[r] == static_cast<std::size_t>(-1)) {
        slot[r] = out.size();
        out.emplace_back();
      }
      out[slot[r]].push_back(i);
    }
    return out;
  }

private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace clarity

#include "claritykit/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace clarity {

std::string_view to_string(Metric m) noexcept { return m == Metric::kHybrid ? "hybrid" : "cosine"; }

void SimilarityConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("gamma must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must lie in (0, 1]");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> drop_z(const std::vector<double>& v) {
  std::vector<double> out;
  out.reserve(v.size() / 3 * 2);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i % 3 != 2) out.push_back(v[i]);
  return out;
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  const double na = dot(a, a), nb = dot(b, b);
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  // sqrt(na * nb) keeps cosine(v, v) exactly 1.
  return std::clamp(dot(a, b) / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<double> l2_normalized(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0)
    for (auto& x : out) x /= n;
  return out;
}

double gaussian_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  if (a.size() != b.size()) throw std::invalid_argument("gaussian_kernel: dimension mismatch");
  double d2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

double hybrid_similarity(const GlobalVectors& a, const GlobalVectors& b, const SimilarityConfig& cfg) {
  if (a.v_sem.size() != b.v_sem.size()) throw std::invalid_argument("hybrid_similarity: semantic dimension mismatch");
  std::vector<double> sa = a.v_struct, sb = b.v_struct;
  if (a.struct_stride != b.struct_stride) {
    if (a.struct_stride == 3) sa = drop_z(sa);
    if (b.struct_stride == 3) sb = drop_z(sb);
  }
  if (sa.size() != sb.size()) throw std::invalid_argument("hybrid_similarity: structural dimension mismatch");

  if (cfg.metric == Metric::kCosineOnly)
    return std::clamp(cosine(concat(sa, a.v_sem), concat(sb, b.v_sem)), 0.0, 1.0);

  const double s2 = gaussian_kernel(l2_normalized(sa), l2_normalized(sb), cfg.gamma);
  if (a.v_sem.empty()) return std::clamp(s2, 0.0, 1.0);
  const double s1 = cosine(a.v_sem, b.v_sem);
  return std::clamp(s1 * s2, 0.0, 1.0);
}

PreparedVectors::PreparedVectors(const GlobalVectors& g, Metric metric)
    : metric_(metric), stride_(g.struct_stride), has_sem_(!g.v_sem.empty()), raw_(g) {
  if (metric == Metric::kCosineOnly) {
    full_ = concat(g.v_struct, g.v_sem);
    full_norm2_ = dot(full_, full_);
    return;
  }
  struct_unit_ = l2_normalized(g.v_struct);
  sem_norm2_ = dot(g.v_sem, g.v_sem);
}

double PreparedVectors::similarity(const PreparedVectors& o, double gamma) const {
  if (stride_ != o.stride_ || metric_ != o.metric_)
    return hybrid_similarity(raw_, o.raw_, SimilarityConfig{gamma, 1.0, metric_});
  if (raw_.v_sem.size() != o.raw_.v_sem.size() || raw_.v_struct.size() != o.raw_.v_struct.size())
    throw std::invalid_argument("similarity: dimension mismatch");

  auto cos = [](std::span<const double> a, double na, std::span<const double> b, double nb) {
    if (na == 0.0 && nb == 0.0) return 1.0;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot(a, b) / std::sqrt(na * nb), -1.0, 1.0);
  };
  if (metric_ == Metric::kCosineOnly) return std::clamp(cos(full_, full_norm2_, o.full_, o.full_norm2_), 0.0, 1.0);

  const double s2 = gaussian_kernel(struct_unit_, o.struct_unit_, gamma);
  if (!has_sem_) return std::clamp(s2, 0.0, 1.0);
  const double s1 = cos(raw_.v_sem, sem_norm2_, o.raw_.v_sem, o.sem_norm2_);
  return std::clamp(s1 * s2, 0.0, 1.0);
}

}  // namespace clarity

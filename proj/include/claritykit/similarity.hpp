#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "claritykit/features.hpp"

namespace clarity {

enum class Metric : std::uint8_t { kCosineOnly, kHybrid };

std::string_view to_string(Metric m) noexcept;

struct SimilarityConfig {
  double gamma = 5.0;
  double tau = 0.9999;
  Metric metric = Metric::kHybrid;

  void validate() const;
};

/// Cosine similarity. Two zero vectors are identical (1); exactly one zero
/// vector gives 0. Throws std::invalid_argument on a length mismatch.
double cosine(std::span<const double> a, std::span<const double> b);

/// Copy of `v` scaled to unit L2 norm (zero stays zero).
std::vector<double> l2_normalized(std::span<const double> v);

/// exp(-gamma * |a - b|^2).
double gaussian_kernel(std::span<const double> a, std::span<const double> b, double gamma);

/// Sample similarity.
///
/// HYBRID: S1 * S2 with S1 = cosine(v_sem) and
/// S2 = exp(-gamma |L2norm(v_struct_a) - L2norm(v_struct_b)|^2); when the
/// semantic part is disabled only S2 remains.
/// COSINE_ONLY: cosine over the full feature vector [v_struct | v_sem].
///
/// If one side fell back from XYZ to XY, the Z slots of the other side are
/// dropped before comparing.
double hybrid_similarity(const GlobalVectors& a, const GlobalVectors& b, const SimilarityConfig& cfg);

/// Precomputed form for repeated pairwise scoring. Bit-identical to
/// hybrid_similarity for equal struct strides.
class PreparedVectors {
public:
  PreparedVectors(const GlobalVectors& g, Metric metric);
  double similarity(const PreparedVectors& o, double gamma) const;
  std::size_t struct_stride() const noexcept { return stride_; }

private:
  Metric metric_;
  std::size_t stride_;
  bool has_sem_ = false;
  GlobalVectors raw_;
  std::vector<double> struct_unit_;  // HYBRID
  double sem_norm2_ = 0.0;           // HYBRID
  std::vector<double> full_;         // COSINE_ONLY: [v_struct | v_sem]
  double full_norm2_ = 0.0;
};

}  // namespace clarity

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sih/common.hpp"

namespace sih {

// RBF feature map phi(x)_l = exp(-|x - a_l|^2 / (2 sigma^2)) over r anchors,
// with a constant 1 appended when `bias` is set.
struct AnchorSet {
  RowMatrixXd anchors;         // r x d, rows taken from the training set
  std::vector<Index> indices;  // training-row provenance of each anchor
  double sigma = 0.0;          // 0 means "not set yet"
  bool bias = true;

  Index size() const { return anchors.rows(); }
  Index dim() const { return anchors.cols(); }
  Index embed_dim() const { return anchors.rows() + (bias ? 1 : 0); }
};

// r distinct rows of `train`, uniform without replacement.
AnchorSet sample_anchors(const RowMatrixXd& train, Index r, std::uint64_t seed);

// Median Euclidean distance over sampled (point, anchor) pairs. When
// sample_pairs covers every pair, all pairs are used exactly once.
double estimate_sigma(const RowMatrixXd& train, const AnchorSet& anchors, Index sample_pairs, std::uint64_t seed);

// Median with the two middle values averaged for even counts. Reorders `values`.
double median(std::vector<double>& values);

namespace detail {
inline void check_embeddable(const AnchorSet& anchors, Index width) {
  if (!(anchors.sigma > 0.0)) throw InvalidArgument("kernel width sigma is unset or not positive");
  if (width != anchors.dim())
    throw DimensionError("input width " + std::to_string(width) + " does not match anchor width " +
                         std::to_string(anchors.dim()));
}
}  // namespace detail

template <typename Derived>
VectorXd embed(const Eigen::MatrixBase<Derived>& x, const AnchorSet& anchors) {
  detail::check_embeddable(anchors, x.size());
  const double scale = -1.0 / (2.0 * anchors.sigma * anchors.sigma);
  VectorXd out(anchors.embed_dim());
  for (Index l = 0; l < anchors.size(); ++l)
    out(l) = std::exp(scale * (anchors.anchors.row(l) - x.derived().reshaped().transpose()).squaredNorm());
  if (anchors.bias) out(anchors.size()) = 1.0;
  return out;
}

// Embeds every row of `rows`; result is n x embed_dim.
MatrixXd embed_rows(const RowMatrixXd& rows, const AnchorSet& anchors, int threads = 1);

}  // namespace sih

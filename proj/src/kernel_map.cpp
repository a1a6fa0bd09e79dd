#include "sih/kernel_map.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace sih {

AnchorSet sample_anchors(const RowMatrixXd& train, Index r, std::uint64_t seed) {
  const Index n = train.rows();
  if (r < 1 || r > n)
    throw InvalidArgument("anchor count " + std::to_string(r) + " must lie in [1, " + std::to_string(n) + "]");
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first r slots end up a uniform r-subset.
  for (Index i = 0; i < r; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  AnchorSet set;
  set.indices.assign(pool.begin(), pool.begin() + r);
  set.anchors.resize(r, train.cols());
  for (Index l = 0; l < r; ++l) set.anchors.row(l) = train.row(set.indices[static_cast<std::size_t>(l)]);
  return set;
}

double median(std::vector<double>& values) {
  if (values.empty()) throw InvalidArgument("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double estimate_sigma(const RowMatrixXd& train, const AnchorSet& anchors, Index sample_pairs, std::uint64_t seed) {
  if (sample_pairs < 1) throw InvalidArgument("estimate_sigma needs sample_pairs >= 1");
  if (train.cols() != anchors.dim()) throw DimensionError("anchor width does not match data width");
  const Index n = train.rows();
  const Index r = anchors.size();
  std::vector<double> dist;
  if (sample_pairs >= n * r) {
    dist.reserve(static_cast<std::size_t>(n * r));
    for (Index i = 0; i < n; ++i)
      for (Index l = 0; l < r; ++l) dist.push_back((train.row(i) - anchors.anchors.row(l)).norm());
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Index> point(0, n - 1);
    std::uniform_int_distribution<Index> anchor(0, r - 1);
    dist.reserve(static_cast<std::size_t>(sample_pairs));
    for (Index s = 0; s < sample_pairs; ++s) {
      const Index i = point(rng);
      const Index l = anchor(rng);
      dist.push_back((train.row(i) - anchors.anchors.row(l)).norm());
    }
  }
  if (*std::max_element(dist.begin(), dist.end()) <= 0.0)
    throw InvalidArgument("all sampled points coincide with their anchors; pass an explicit sigma");
  double sigma = median(dist);
  if (sigma <= 0.0) {
    // More than half the pairs coincide; fall back to the positive distances.
    std::erase_if(dist, [](double v) { return v <= 0.0; });
    sigma = median(dist);
  }
  return sigma;
}

MatrixXd embed_rows(const RowMatrixXd& rows, const AnchorSet& anchors, int threads) {
  detail::check_embeddable(anchors, rows.cols());
  MatrixXd phi(rows.rows(), anchors.embed_dim());
  parallel_for(rows.rows(), threads, [&](Index i) { phi.row(i) = embed(rows.row(i), anchors).transpose(); });
  return phi;
}

}  // namespace sih

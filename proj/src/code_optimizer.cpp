#include "sih/code_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sih {

CodeMatrix::CodeMatrix(Index rows, Index cols, std::int8_t fill)
    : bits_(CodeBits::Constant(rows, cols, fill)), revisions_(static_cast<std::size_t>(cols), 0) {
  if (fill != 1 && fill != -1) throw InvalidArgument("code entries must be +1 or -1");
}

CodeMatrix::CodeMatrix(CodeBits bits) : bits_(std::move(bits)), revisions_(static_cast<std::size_t>(bits_.cols()), 0) {
  if (!(bits_.array() == 1 || bits_.array() == -1).all()) throw InvalidArgument("code entries must be +1 or -1");
}

void CodeMatrix::set(Index i, Index j, std::int8_t value) {
  if (value != 1 && value != -1) throw InvalidArgument("code entries must be +1 or -1");
  if (bits_(i, j) != value) {
    bits_(i, j) = value;
    ++revisions_[static_cast<std::size_t>(j)];
  }
}

bool CodeMatrix::set_column(Index j, const CodeVector& column) {
  if (column.size() != rows()) throw DimensionError("column length does not match code rows");
  if (!(column.array() == 1 || column.array() == -1).all()) throw InvalidArgument("code entries must be +1 or -1");
  if (bits_.col(j) == column) return false;
  bits_.col(j) = column;
  ++revisions_[static_cast<std::size_t>(j)];
  return true;
}

MatrixXd CodeMatrix::with_bias() const {
  MatrixXd out(rows(), cols() + 1);
  out.leftCols(cols()) = bits_.cast<double>();
  out.col(cols()).setOnes();
  return out;
}

BitLossInputs::BitLossInputs(const CodeMatrix& codes, MatrixXd bit_scores, MatrixXd wb, std::vector<int> labels,
                             BitLossParams params)
    : bit_scores_(std::move(bit_scores)), wb_(std::move(wb)), labels_(std::move(labels)), params_(params) {
  if (bit_scores_.rows() != codes.rows() || bit_scores_.cols() != codes.cols())
    throw DimensionError("bit scores must be n x m like the code matrix");
  if (wb_.rows() != codes.cols() + 1) throw DimensionError("multi-class weights must have m + 1 rows");
  if (static_cast<Index>(labels_.size()) != codes.rows()) throw DimensionError("one label per code row required");
  if (params_.gamma < 0.0 || params_.lambda < 0.0 || !(params_.cx > 0.0) || !(params_.cb > 0.0))
    throw InvalidArgument("bit loss needs gamma, lambda >= 0 and cx, cb > 0");
  const MatrixXd raw = codes.with_bias() * wb_;
  class_scores_.resize(raw.rows(), raw.cols());
  for (Index i = 0; i < raw.rows(); ++i) {
    const int y = labels_[static_cast<std::size_t>(i)];
    if (y < 0 || y >= wb_.cols()) throw InvalidArgument("label out of range for multi-class weights");
    class_scores_.row(i) = raw.row(i).array() - raw(i, y);
  }
}

double BitLossInputs::loss(int z, Index i, Index j, int current) const {
  const int y = labels_[static_cast<std::size_t>(i)];
  double multi = 0.0;
  for (Index k = 0; k < wb_.cols(); ++k) {
    if (k == y) continue;
    const double diff = wb_(j, k) - wb_(j, y);
    const double theta = class_scores_(i, k) - current * diff;
    multi = std::max(multi, 1.0 + z * diff + theta);
  }
  const double hinge = std::max(0.0, 1.0 - z * bit_scores_(i, j));
  return params_.lambda * params_.cb * multi + params_.cx * hinge;
}

void BitLossInputs::flip(Index i, Index j, int old_value) {
  const int y = labels_[static_cast<std::size_t>(i)];
  for (Index k = 0; k < wb_.cols(); ++k) class_scores_(i, k) -= 2.0 * old_value * (wb_(j, k) - wb_(j, y));
}

double bit_flip_loss(int z, Index i, Index j, const CodeMatrix& codes, const BitLossInputs& inputs) {
  if (z != 1 && z != -1) throw InvalidArgument("z must be +1 or -1");
  return inputs.loss(z, i, j, codes(i, j));
}

ColumnDeltas column_deltas(Index j, const CodeMatrix& codes, const BitLossInputs& inputs, int threads) {
  const Index n = codes.rows();
  ColumnDeltas out;
  out.loss_neg.resize(n);
  out.loss_pos.resize(n);
  parallel_for(n, threads, [&](Index i) {
    const int current = codes(i, j);
    out.loss_neg(i) = inputs.loss(-1, i, j, current);
    out.loss_pos(i) = inputs.loss(+1, i, j, current);
  });
  out.delta = out.loss_neg - out.loss_pos;
  out.order.resize(static_cast<std::size_t>(n));
  std::iota(out.order.begin(), out.order.end(), Index{0});
  std::stable_sort(out.order.begin(), out.order.end(), [&](Index a, Index b) { return out.delta(a) < out.delta(b); });
  return out;
}

Index optimal_cut(std::span<const double> loss_neg_sorted, std::span<const double> loss_pos_sorted, double gamma) {
  if (loss_neg_sorted.size() != loss_pos_sorted.size()) throw DimensionError("optimal_cut: loss arrays differ in length");
  const Index n = static_cast<Index>(loss_neg_sorted.size());
  std::vector<double> suffix(static_cast<std::size_t>(n) + 1, 0.0);
  for (Index i = n - 1; i >= 0; --i)
    suffix[static_cast<std::size_t>(i)] = suffix[static_cast<std::size_t>(i) + 1] + loss_pos_sorted[static_cast<std::size_t>(i)];
  double prefix = 0.0;
  Index best = 0;
  double best_value = 0.0;
  Index best_imbalance = 0;
  for (Index l = 0; l <= n; ++l) {
    if (l > 0) prefix += loss_neg_sorted[static_cast<std::size_t>(l) - 1];
    const Index imbalance = std::abs(2 * l - n);
    const double value = gamma * static_cast<double>(imbalance) + prefix + suffix[static_cast<std::size_t>(l)];
    if (l == 0 || value < best_value || (value == best_value && imbalance < best_imbalance)) {
      best = l;
      best_value = value;
      best_imbalance = imbalance;
    }
  }
  return best;
}

CodeVector optimize_column(Index j, const CodeMatrix& codes, const BitLossInputs& inputs, int threads) {
  const ColumnDeltas cd = column_deltas(j, codes, inputs, threads);
  const std::size_t n = cd.order.size();
  std::vector<double> neg(n), pos(n);
  for (std::size_t p = 0; p < n; ++p) {
    neg[p] = cd.loss_neg(cd.order[p]);
    pos[p] = cd.loss_pos(cd.order[p]);
  }
  const Index cut = optimal_cut(neg, pos, inputs.params().gamma);
  CodeVector column = CodeVector::Ones(static_cast<Index>(n));
  for (Index p = 0; p < cut; ++p) column(cd.order[static_cast<std::size_t>(p)]) = -1;
  return column;
}

DccResult dcc_optimize(CodeMatrix& codes, BitLossInputs& inputs, int max_sweeps, int threads) {
  if (inputs.rows() != codes.rows() || inputs.bits() != codes.cols())
    throw DimensionError("dcc_optimize: inputs do not match code matrix");
  DccResult result;
  result.changed.assign(static_cast<std::size_t>(codes.cols()), false);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    ++result.sweeps;
    bool any = false;
    for (Index j = 0; j < codes.cols(); ++j) {
      const CodeVector column = optimize_column(j, codes, inputs, threads);
      bool moved = false;
      for (Index i = 0; i < codes.rows(); ++i) {
        if (column(i) != codes(i, j)) {
          inputs.flip(i, j, codes(i, j));
          moved = true;
        }
      }
      if (moved) {
        codes.set_column(j, column);
        result.changed[static_cast<std::size_t>(j)] = true;
        any = true;
      }
    }
    if (!any) break;
  }
  return result;
}

double codes_objective(const CodeMatrix& codes, const BitLossInputs& inputs) {
  const auto& p = inputs.params();
  const MatrixXd raw = codes.with_bias() * inputs.wb();
  double total = 0.0;
  for (Index i = 0; i < codes.rows(); ++i) {
    const int y = inputs.labels()[static_cast<std::size_t>(i)];
    double xi = 0.0;
    for (Index k = 0; k < raw.cols(); ++k)
      if (k != y) xi = std::max(xi, 1.0 + raw(i, k) - raw(i, y));
    total += p.lambda * p.cb * xi;
    for (Index j = 0; j < codes.cols(); ++j)
      total += p.cx * std::max(0.0, 1.0 - codes(i, j) * inputs.bit_scores()(i, j));
  }
  for (Index j = 0; j < codes.cols(); ++j)
    total += p.gamma * std::abs(codes.bits().col(j).cast<double>().sum());
  return total;
}

}  // namespace sih

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sih/common.hpp"

namespace sih {

// n x m matrix over {-1, +1} with a revision counter per column that moves
// whenever an entry of that column changes.
class CodeMatrix {
 public:
  CodeMatrix() = default;
  CodeMatrix(Index rows, Index cols, std::int8_t fill = 1);
  explicit CodeMatrix(CodeBits bits);

  Index rows() const { return bits_.rows(); }
  Index cols() const { return bits_.cols(); }
  std::int8_t operator()(Index i, Index j) const { return bits_(i, j); }
  const CodeBits& bits() const { return bits_; }
  std::uint64_t revision(Index j) const { return revisions_[static_cast<std::size_t>(j)]; }

  void set(Index i, Index j, std::int8_t value);
  // Returns true if the column changed.
  bool set_column(Index j, const CodeVector& column);

  // Codes as doubles with a trailing bias column of ones: n x (m + 1).
  MatrixXd with_bias() const;

  friend bool operator==(const CodeMatrix& a, const CodeMatrix& b) { return a.bits_ == b.bits_; }

 private:
  CodeBits bits_;
  std::vector<std::uint64_t> revisions_;
};

struct BitLossParams {
  double lambda = 1.0;
  double cb = 1.0;
  double cx = 1.0;
  double gamma = 0.0;
};

// Everything the per-bit loss L(z, i, j) needs with the SVM weights fixed:
// bit scores (w^x_j).phi_i, the multi-class weights and a cached class-score
// matrix S(i, k) = (w^b_k - w^b_{y_i}).[b_i; 1], kept current as columns move.
class BitLossInputs {
 public:
  BitLossInputs(const CodeMatrix& codes, MatrixXd bit_scores, MatrixXd wb, std::vector<int> labels,
                BitLossParams params);

  Index rows() const { return bit_scores_.rows(); }
  Index bits() const { return bit_scores_.cols(); }
  Index num_classes() const { return wb_.cols(); }
  const BitLossParams& params() const { return params_; }
  const MatrixXd& bit_scores() const { return bit_scores_; }
  const MatrixXd& wb() const { return wb_; }
  const std::vector<int>& labels() const { return labels_; }
  const MatrixXd& class_scores() const { return class_scores_; }

  // L(z, i, j) given the current value `current` of b_ij.
  double loss(int z, Index i, Index j, int current) const;

  // Refreshes S after bit j of row i flipped from `old_value`.
  void flip(Index i, Index j, int old_value);

 private:
  MatrixXd bit_scores_;  // n x m
  MatrixXd wb_;          // (m + 1) x K
  std::vector<int> labels_;
  BitLossParams params_;
  MatrixXd class_scores_;  // n x K
};

double bit_flip_loss(int z, Index i, Index j, const CodeMatrix& codes, const BitLossInputs& inputs);

struct ColumnDeltas {
  VectorXd loss_neg;  // L(-1, i, j)
  VectorXd loss_pos;  // L(+1, i, j)
  VectorXd delta;     // loss_neg - loss_pos
  std::vector<Index> order;  // ascending delta, ties by index
};

ColumnDeltas column_deltas(Index j, const CodeMatrix& codes, const BitLossInputs& inputs, int threads = 1);

// argmin over l of gamma |2l - n| + sum_{i < l} loss_neg[i] + sum_{i >= l} loss_pos[i],
// inputs already in ascending-delta order. Ties prefer l nearest n/2, then smaller l.
Index optimal_cut(std::span<const double> loss_neg_sorted, std::span<const double> loss_pos_sorted, double gamma);

// Exactly minimizes gamma |sum_i b_ij| + sum_i L(b_ij, i, j) over column j.
CodeVector optimize_column(Index j, const CodeMatrix& codes, const BitLossInputs& inputs, int threads = 1);

struct DccResult {
  std::vector<bool> changed;  // per column, over all sweeps
  int sweeps = 0;
};

// Cyclic column updates until a sweep changes nothing or max_sweeps is hit.
DccResult dcc_optimize(CodeMatrix& codes, BitLossInputs& inputs, int max_sweeps = 5, int threads = 1);

// gamma sum_j |sum_i b_ij| + sum_i (lambda cb xi^b_i) + sum_ij cx xi^x_ij for fixed weights.
double codes_objective(const CodeMatrix& codes, const BitLossInputs& inputs);

}  // namespace sih

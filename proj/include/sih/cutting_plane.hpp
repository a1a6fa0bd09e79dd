#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "sih/common.hpp"

namespace sih {

// Cutting-plane minimization of F(w) = 0.5 |w|^2 + C R(w) for a convex,
// non-negative risk R, with a best-so-far iterate refined by line search
// (the OCAS scheme) and support for warm starts.

struct RiskValue {
  double risk = 0.0;
  VectorXd subgradient;
};

struct LineSearchResult {
  double step = 0.0;  // k* >= 0
  VectorXd w;         // w_from + k* (w_to - w_from)
};

class RiskOracle {
 public:
  virtual ~RiskOracle() = default;

  virtual Index dim() const = 0;
  virtual RiskValue evaluate(const VectorXd& w) const = 0;
  virtual double risk(const VectorXd& w) const { return evaluate(w).risk; }
  // Upper bound G on the norm of any subgradient of R.
  virtual double subgradient_bound() const = 0;

  // argmin over k >= 0 of F(w_from + k (w_to - w_from)). The default is a
  // golden-section search, valid because the restriction of F is convex.
  virtual LineSearchResult line_search(const VectorXd& w_from, const VectorXd& w_to, double C) const;

  double objective(const VectorXd& w, double C) const { return 0.5 * w.squaredNorm() + C * risk(w); }
};

// Sum of hinge losses max(0, 1 - y_i w.phi_i); rows of `phi` are samples.
// Points exactly on the margin do not contribute to the subgradient.
RiskValue binary_risk(const VectorXd& w, const MatrixXd& phi, const VectorXd& targets);

// Crammer-Singer risk sum_i max_k (1[y_i != k] + (w_k - w_{y_i}).b_i).
// W is code_dim x K (one column per class), rows of `codes` are samples.
// When the true class attains the max, the point contributes no subgradient.
struct MulticlassRiskValue {
  double risk = 0.0;
  MatrixXd subgradient;
};
MulticlassRiskValue multiclass_risk(const MatrixXd& W, const MatrixXd& codes, std::span<const int> labels);

class HingeRisk final : public RiskOracle {
 public:
  // Keeps a reference to `phi`; it must outlive the oracle.
  HingeRisk(const MatrixXd& phi, VectorXd targets);

  Index dim() const override { return phi_.cols(); }
  RiskValue evaluate(const VectorXd& w) const override { return binary_risk(w, phi_, targets_); }
  double risk(const VectorXd& w) const override;
  double subgradient_bound() const override { return bound_; }
  // Exact minimization over the sorted hinge breakpoints.
  LineSearchResult line_search(const VectorXd& w_from, const VectorXd& w_to, double C) const override;

  const VectorXd& targets() const { return targets_; }

 private:
  const MatrixXd& phi_;
  VectorXd targets_;
  double bound_;
};

// Weight vector is the column-major flattening of the code_dim x K matrix W.
class MulticlassRisk final : public RiskOracle {
 public:
  MulticlassRisk(const MatrixXd& codes, std::vector<int> labels, Index num_classes);

  Index dim() const override { return codes_.cols() * num_classes_; }
  RiskValue evaluate(const VectorXd& w) const override;
  double risk(const VectorXd& w) const override;
  double subgradient_bound() const override { return bound_; }
  // Golden section over precomputed affine class scores.
  LineSearchResult line_search(const VectorXd& w_from, const VectorXd& w_to, double C) const override;

  Index num_classes() const { return num_classes_; }

 private:
  const MatrixXd& codes_;
  std::vector<int> labels_;
  Index num_classes_;
  double bound_;
};

// Linear lower bounds R(w) >= a.w + b, with their Gram matrix and the dual
// weights of the last reduced solve (used to warm start the next one).
class CuttingPlaneSet {
 public:
  explicit CuttingPlaneSet(Index capacity = 500);

  // Evicts the least recently active plane (never the newest) when full.
  // `point` is where the plane was cut, if known.
  void add(VectorXd normal, double offset, int iteration, VectorXd point = {});

  Index size() const { return static_cast<Index>(normals_.size()); }
  Index capacity() const { return capacity_; }
  const VectorXd& normal(Index t) const { return normals_[static_cast<std::size_t>(t)]; }
  double offset(Index t) const { return offsets_[static_cast<std::size_t>(t)]; }
  const VectorXd& point(Index t) const { return points_[static_cast<std::size_t>(t)]; }
  const MatrixXd& gram() const { return gram_; }

  // max(0, max_t a_t.w + b_t)
  double model_risk(const VectorXd& w) const;

  std::vector<double>& weights() { return alpha_; }
  void mark_active(int iteration);
  // Treats every plane as last active at iteration 0.
  void reset_activity();

 private:
  Index capacity_;
  std::vector<VectorXd> normals_;
  std::vector<double> offsets_;
  std::vector<VectorXd> points_;
  std::vector<double> alpha_;
  std::vector<int> last_active_;
  MatrixXd gram_;
};

struct ReducedSolution {
  VectorXd w;
  double primal = 0.0;  // F_t(w)
  double dual = 0.0;    // lower bound on min F_t
  int updates = 0;
};

// Minimizes F_t(w) = 0.5 |w|^2 + C max(0, max_t a_t.w + b_t) through its dual
// (alpha_t >= 0, sum alpha_t <= C, w = -sum alpha_t a_t) by pairwise
// coordinate ascent with periodic Newton steps on the support, to a relative
// duality gap of `tolerance`.
ReducedSolution reduced_minimizer(CuttingPlaneSet& planes, double C, double tolerance = 1e-8);

LineSearchResult exact_line_search(const VectorXd& w_from, const VectorXd& w_to, const RiskOracle& oracle, double C);

struct SolverConfig {
  double C = 1.0;
  double epsilon = 0.0;  // <= 0 selects default_epsilon()
  Index max_planes = 500;
  int max_iterations = 1000;
  // New planes are cut at (1 - mix) w_best + mix w_current.
  double cut_mix = 0.1;
};

struct TraceEntry {
  int iteration = 0;
  double f_best = 0.0;
  double f_model = 0.0;  // lower bound on min F from the reduced dual
  double gap = 0.0;
};

struct SolverState {
  VectorXd w_best;
  VectorXd w_current;
  int iterations = 0;
  double gap = 0.0;
  double f_best = 0.0;
  double f_start = 0.0;  // F(w0)
  double epsilon = 0.0;
  double subgradient_bound = 0.0;
  bool converged = false;
  std::vector<TraceEntry> trace;
  CuttingPlaneSet planes;
  // Cut points of the planes carrying dual weight in the last reduced solve.
  std::vector<VectorXd> support_points;
};

// 1e-3 * max(1, F(0)), with F(0) = C R(0).
double default_epsilon(const RiskOracle& oracle, double C);

// Starts from w0, or from the origin when F(0) < F(w0).
SolverState cp_solve(const RiskOracle& oracle, const VectorXd& w0, const SolverConfig& config);

// Also cuts a plane at each of `cut_points` before the first iteration.
// Subgradient planes are lower bounds wherever they are cut, so any points
// will do; support points of a related earlier solve are the useful choice.
SolverState cp_solve(const RiskOracle& oracle, const VectorXd& w0, const SolverConfig& config,
                     std::span<const VectorXd> cut_points);

// Resumes from previous.w_best with previous.planes as the initial model.
// Those planes must be lower bounds of this oracle's risk, which holds when
// the data and targets are unchanged.
SolverState cp_solve(const RiskOracle& oracle, const SolverState& previous, const SolverConfig& config);

// max(1, log2(F0 / (4 C^2 G^2)) + 8 C^2 G^2 / epsilon - 2)
double iteration_bound(double f0, double C, double G, double epsilon);

// iteration,f_best,f_model,gap
void write_trace_csv(std::ostream& out, const SolverState& state);

}  // namespace sih

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sih/code_optimizer.hpp"
#include "sih/common.hpp"
#include "sih/cutting_plane.hpp"
#include "sih/dataset.hpp"
#include "sih/kernel_map.hpp"

namespace sih {

struct TrainConfig {
  Index bits = 32;
  Index anchors = 1000;
  double cx = 16.0;
  double cb = 1e-3;
  std::optional<double> lambda;  // unset: bits * 1e8
  double gamma = 1e5;
  int max_iter = 5;
  std::optional<double> sigma;  // unset: median (point, anchor) distance
  double epsilon = 0.0;         // <= 0: per-solver relative default
  std::uint64_t seed = 0;
  int threads = 1;  // never affects results
  int max_sweeps = 5;
  Index max_planes = 500;
  int solver_max_iterations = 1000;
  Index sigma_pairs = 20000;

  double lambda_value() const { return lambda ? *lambda : static_cast<double>(bits) * 1e8; }
  BitLossParams loss_params() const { return BitLossParams{lambda_value(), cb, cx, gamma}; }
  void validate() const;
};

enum class Phase { init, svm, codes };
const char* phase_name(Phase phase);

struct HistoryEntry {
  int iteration = 0;
  Phase phase = Phase::init;
  double objective = 0.0;
  // Largest increase over the previous entry that solver tolerances allow.
  double tolerance = 0.0;
  Index changed_columns = 0;
};

struct HashModel {
  PreprocessStats preprocess;
  AnchorSet anchors;
  MatrixXd wx;  // (r + 1) x m
  MatrixXd wb;  // (m + 1) x K
  std::vector<std::string> class_names;
  TrainConfig config;
  std::vector<HistoryEntry> history;
  bool converged = false;

  Index bits() const { return wx.cols(); }
  Index input_dim() const { return preprocess.mean.size(); }
  Index num_classes() const { return wb.cols(); }
};

struct TrainStats {
  int outer_iterations = 0;
  Index bit_solves = 0;
  Index multiclass_solves = 0;
  std::vector<Index> bit_solves_per_column;
  std::vector<int> bit_solver_iterations;  // one entry per bit solve, in column order per iteration
  std::vector<int> multiclass_solver_iterations;
  std::vector<double> bit_objectives;  // F_j(w_j) at the end of training, per column
  bool all_solves_converged = true;
  double seconds = 0.0;
};

// Cut points of the support planes from the latest bit and multi-class
// solves. Planes cut there again bound any later risk, so they seed warm
// starts even after codes or rows change.
struct SolverMemory {
  std::vector<std::vector<VectorXd>> bits;  // per column
  std::vector<VectorXd> classes;            // flattened W
};

struct TrainResult {
  HashModel model;
  CodeMatrix codes;
  TrainStats stats;
  SolverMemory memory;
};

// One codeword per class, shared by all its rows. With gamma > 0 every column
// of the K codewords carries exactly ceil(K/2) entries of +1.
CodeMatrix init_codes(std::span<const int> labels, Index num_classes, Index bits, double gamma, std::uint64_t seed);

// Random codewords for `count` classes under the same rules as init_codes.
CodeBits sample_codewords(Index count, Index bits, double gamma, std::uint64_t seed);

// Value of the joint objective with slacks at their optimal hinge values.
double total_objective(const CodeMatrix& codes, const MatrixXd& wx, const MatrixXd& wb, const MatrixXd& phi,
                       std::span<const int> labels, const TrainConfig& config);

// Optional sink for line-delimited progress records.
struct TrainLog {
  std::ostream* out = nullptr;
};

TrainResult train(const Dataset& data, const TrainConfig& config, TrainLog log = {});

// Warm-start entry into the alternating loop. `phi` holds embedded rows;
// `wx`/`wb` seed the solvers (wb is reset when `wb_cold`).
struct LoopStart {
  CodeMatrix codes;
  MatrixXd wx;
  MatrixXd wb;
  bool wb_cold = false;
  SolverMemory memory;  // entries of the wrong shape are ignored
};
TrainResult run_alternating(HashModel shell, const MatrixXd& phi, std::span<const int> labels, LoopStart start,
                            const TrainConfig& config, TrainLog log = {});

// sign((W^x)^T phi(x)) with sign(0) = +1.
CodeVector encode(const HashModel& model, const VectorXd& x);
CodeBits encode_rows(const HashModel& model, const RowMatrixXd& rows, int threads = 1);
// Bit scores (W^x)^T phi(x) for each row: n x m.
MatrixXd bit_scores(const HashModel& model, const RowMatrixXd& rows, int threads = 1);

}  // namespace sih

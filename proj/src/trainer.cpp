#include "sih/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <random>
#include <set>

namespace sih {

namespace {

bool has_duplicate_rows(const CodeBits& words) {
  std::set<std::vector<std::int8_t>> seen;
  for (Index k = 0; k < words.rows(); ++k) {
    std::vector<std::int8_t> row(static_cast<std::size_t>(words.cols()));
    for (Index j = 0; j < words.cols(); ++j) row[static_cast<std::size_t>(j)] = words(k, j);
    if (!seen.insert(std::move(row)).second) return true;
  }
  return false;
}

bool row_collides(const CodeBits& words, Index k) {
  for (Index other = 0; other < words.rows(); ++other)
    if (other != k && words.row(other) == words.row(k)) return true;
  return false;
}

constexpr int kCodewordAttempts = 100;

}  // namespace

void TrainConfig::validate() const {
  if (bits < 1) throw InvalidArgument("bits must be >= 1");
  if (anchors < 1) throw InvalidArgument("anchors must be >= 1");
  if (!(cx > 0.0) || !(cb > 0.0)) throw InvalidArgument("cx and cb must be positive");
  if (lambda_value() < 0.0 || gamma < 0.0) throw InvalidArgument("lambda and gamma must be non-negative");
  if (max_iter < 1) throw InvalidArgument("max_iter must be >= 1");
  if (sigma && !(*sigma > 0.0)) throw InvalidArgument("sigma must be positive");
  if (max_sweeps < 1 || max_planes < 2 || solver_max_iterations < 1 || sigma_pairs < 1)
    throw InvalidArgument("solver limits must be positive");
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::init: return "init";
    case Phase::svm: return "svm";
    case Phase::codes: return "codes";
  }
  return "?";
}

CodeBits sample_codewords(Index count, Index bits, double gamma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CodeBits words(count, bits);
  if (count == 0) return words;
  if (gamma > 0.0) {
    // Balanced columns: ceil(K/2) positives per column, shuffled.
    const Index positives = (count + 1) / 2;
    std::vector<std::int8_t> column(static_cast<std::size_t>(count));
    auto draw = [&] {
      for (Index j = 0; j < bits; ++j) {
        for (Index k = 0; k < count; ++k) column[static_cast<std::size_t>(k)] = k < positives ? 1 : -1;
        std::shuffle(column.begin(), column.end(), rng);
        for (Index k = 0; k < count; ++k) words(k, j) = column[static_cast<std::size_t>(k)];
      }
    };
    draw();
    for (int attempt = 1; attempt < kCodewordAttempts && has_duplicate_rows(words); ++attempt) draw();
    if (has_duplicate_rows(words)) std::clog << "sih: warning: balanced codewords collide for some classes\n";
    return words;
  }
  std::bernoulli_distribution coin(0.5);
  bool collided = false;
  for (Index k = 0; k < count; ++k) {
    int attempt = 0;
    do {
      for (Index j = 0; j < bits; ++j) words(k, j) = coin(rng) ? 1 : -1;
    } while (row_collides(words.topRows(k + 1), k) && ++attempt < kCodewordAttempts);
    collided = collided || row_collides(words.topRows(k + 1), k);
  }
  if (collided) std::clog << "sih: warning: random codewords collide for some classes\n";
  return words;
}

CodeMatrix init_codes(std::span<const int> labels, Index num_classes, Index bits, double gamma, std::uint64_t seed) {
  if (num_classes < 1) throw InvalidArgument("init_codes needs at least one class");
  const CodeBits words = sample_codewords(num_classes, bits, gamma, seed);
  CodeBits codes(static_cast<Index>(labels.size()), bits);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InvalidArgument("label out of range");
    codes.row(static_cast<Index>(i)) = words.row(labels[i]);
  }
  return CodeMatrix(std::move(codes));
}

double total_objective(const CodeMatrix& codes, const MatrixXd& wx, const MatrixXd& wb, const MatrixXd& phi,
                       std::span<const int> labels, const TrainConfig& config) {
  const Index n = codes.rows();
  const Index m = codes.cols();
  if (phi.rows() != n || wx.rows() != phi.cols() || wx.cols() != m || wb.rows() != m + 1 ||
      static_cast<Index>(labels.size()) != n)
    throw DimensionError("total_objective: inconsistent dimensions");
  const MatrixXd scores = phi * wx;
  const MatrixXd class_scores = codes.with_bias() * wb;
  double multi = 0.0;
  double binary = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    double xi = 0.0;
    for (Index k = 0; k < wb.cols(); ++k)
      if (k != y) xi = std::max(xi, 1.0 + class_scores(i, k) - class_scores(i, y));
    multi += xi;
    for (Index j = 0; j < m; ++j) binary += std::max(0.0, 1.0 - codes(i, j) * scores(i, j));
  }
  double imbalance = 0.0;
  for (Index j = 0; j < m; ++j) imbalance += std::abs(codes.bits().col(j).cast<double>().sum());
  return config.lambda_value() * (0.5 * wb.squaredNorm() + config.cb * multi) + 0.5 * wx.squaredNorm() +
         config.cx * binary + config.gamma * imbalance;
}

TrainResult run_alternating(HashModel shell, const MatrixXd& phi, std::span<const int> labels, LoopStart start,
                            const TrainConfig& config, TrainLog log) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const Index n = phi.rows();
  const Index m = start.codes.cols();
  const Index K = static_cast<Index>(shell.class_names.size());
  if (start.codes.rows() != n || static_cast<Index>(labels.size()) != n)
    throw DimensionError("codes, labels and embedded rows disagree");
  if (start.wx.rows() != phi.cols() || start.wx.cols() != m) throw DimensionError("bit weights have the wrong shape");
  if (start.wb_cold || start.wb.rows() != m + 1 || start.wb.cols() != K) {
    start.wb = MatrixXd::Zero(m + 1, K);
    start.memory.classes.clear();
  }
  TrainResult result;
  result.codes = std::move(start.codes);
  SolverMemory& memory = result.memory;
  memory.bits.resize(static_cast<std::size_t>(m));
  for (std::size_t j = 0; j < memory.bits.size(); ++j) {
    if (j < start.memory.bits.size()) memory.bits[j] = std::move(start.memory.bits[j]);
    std::erase_if(memory.bits[j], [&](const VectorXd& p) { return p.size() != phi.cols(); });
  }
  memory.classes = std::move(start.memory.classes);
  std::erase_if(memory.classes, [&](const VectorXd& p) { return p.size() != (m + 1) * K; });

  MatrixXd wx = std::move(start.wx);
  MatrixXd wb = std::move(start.wb);
  const std::vector<int> label_vec(labels.begin(), labels.end());
  const double lambda = config.lambda_value();
  TrainStats& stats = result.stats;
  stats.bit_solves_per_column.assign(static_cast<std::size_t>(m), 0);
  stats.bit_objectives.assign(static_cast<std::size_t>(m), 0.0);

  std::vector<HistoryEntry>& history = shell.history;
  history.clear();
  double tolerance = 0.0;
  auto record = [&](int iteration, Phase phase, Index changed) {
    const double value = total_objective(result.codes, wx, wb, phi, labels, config);
    history.push_back(HistoryEntry{iteration, phase, value, tolerance, changed});
    if (log.out) {
      const double secs = std::chrono::duration<double>(clock::now() - t0).count();
      *log.out << "iteration=" << iteration << " phase=" << phase_name(phase) << " objective=" << value
               << " changed=" << changed << " seconds=" << secs << '\n';
    }
  };
  record(0, Phase::init, 0);

  SolverConfig bit_solver{config.cx, config.epsilon, config.max_planes, config.solver_max_iterations};
  SolverConfig class_solver{config.cb, config.epsilon, config.max_planes, config.solver_max_iterations};

  std::vector<Index> dirty(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) dirty[static_cast<std::size_t>(j)] = j;
  bool converged = false;

  for (int t = 1; t <= config.max_iter; ++t) {
    stats.outer_iterations = t;
    // Bit SVMs: independent problems on disjoint columns, merged in column order.
    std::vector<SolverState> solved(dirty.size());
    parallel_for(static_cast<Index>(dirty.size()), config.threads, [&](Index c) {
      const Index j = dirty[static_cast<std::size_t>(c)];
      HingeRisk oracle(phi, result.codes.bits().col(j).cast<double>());
      solved[static_cast<std::size_t>(c)] = cp_solve(oracle, wx.col(j), bit_solver, memory.bits[static_cast<std::size_t>(j)]);
    });
    double max_eps = 0.0;
    for (std::size_t c = 0; c < dirty.size(); ++c) {
      const Index j = dirty[c];
      wx.col(j) = solved[c].w_best;
      stats.bit_objectives[static_cast<std::size_t>(j)] = solved[c].f_best;
      memory.bits[static_cast<std::size_t>(j)] = std::move(solved[c].support_points);
      ++stats.bit_solves;
      ++stats.bit_solves_per_column[static_cast<std::size_t>(j)];
      stats.bit_solver_iterations.push_back(solved[c].iterations);
      stats.all_solves_converged = stats.all_solves_converged && solved[c].converged;
      max_eps = std::max(max_eps, solved[c].epsilon);
    }
    if (!dirty.empty()) {
      const MatrixXd with_bias = result.codes.with_bias();
      MulticlassRisk oracle(with_bias, label_vec, K);
      const VectorXd w0 = wb.reshaped();
      SolverState state = cp_solve(oracle, w0, class_solver, memory.classes);
      wb = state.w_best.reshaped(m + 1, K);
      memory.classes = std::move(state.support_points);
      ++stats.multiclass_solves;
      stats.multiclass_solver_iterations.push_back(state.iterations);
      stats.all_solves_converged = stats.all_solves_converged && state.converged;
      max_eps = std::max(max_eps, lambda * state.epsilon);
    }
    tolerance = std::max(tolerance, static_cast<double>(m + 1) * max_eps);
    record(t, Phase::svm, 0);

    BitLossInputs inputs(result.codes, phi * wx, wb, label_vec, config.loss_params());
    const DccResult dcc = dcc_optimize(result.codes, inputs, config.max_sweeps, config.threads);
    dirty.clear();
    for (Index j = 0; j < m; ++j)
      if (dcc.changed[static_cast<std::size_t>(j)]) dirty.push_back(j);
    record(t, Phase::codes, static_cast<Index>(dirty.size()));
    if (dirty.empty()) {
      converged = true;
      break;
    }
  }

  shell.wx = std::move(wx);
  shell.wb = std::move(wb);
  shell.converged = converged;
  shell.config = config;
  result.model = std::move(shell);
  stats.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

TrainResult train(const Dataset& data, const TrainConfig& config, TrainLog log) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  config.validate();
  data.validate();
  if (data.size() < 2) throw InvalidArgument("training needs at least two samples");
  if ((data.features.rowwise() - data.features.row(0)).cwiseAbs().maxCoeff() == 0.0)
    throw InvalidArgument("all training features are identical");

  HashModel shell;
  shell.preprocess = fit_preprocessor(data);
  const RowMatrixXd X = apply_preprocessor(shell.preprocess, data.features);
  shell.anchors = sample_anchors(X, config.anchors, derive_seed(config.seed, 0));
  shell.anchors.sigma =
      config.sigma ? *config.sigma : estimate_sigma(X, shell.anchors, config.sigma_pairs, derive_seed(config.seed, 1));
  shell.class_names = data.class_names;
  const MatrixXd phi = embed_rows(X, shell.anchors, config.threads);

  LoopStart start;
  start.codes = init_codes(data.labels, data.num_classes(), config.bits, config.gamma, derive_seed(config.seed, 2));
  start.wx = MatrixXd::Zero(phi.cols(), config.bits);
  start.wb = MatrixXd::Zero(config.bits + 1, data.num_classes());
  TrainResult result = run_alternating(std::move(shell), phi, data.labels, std::move(start), config, log);
  result.stats.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return result;
}

MatrixXd bit_scores(const HashModel& model, const RowMatrixXd& rows, int threads) {
  const RowMatrixXd X = apply_preprocessor(model.preprocess, rows);
  return embed_rows(X, model.anchors, threads) * model.wx;
}

CodeBits encode_rows(const HashModel& model, const RowMatrixXd& rows, int threads) {
  const MatrixXd scores = bit_scores(model, rows, threads);
  return scores.unaryExpr([](double s) -> std::int8_t { return s >= 0.0 ? 1 : -1; });
}

CodeVector encode(const HashModel& model, const VectorXd& x) {
  if (x.size() != model.input_dim())
    throw DimensionError("input has " + std::to_string(x.size()) + " features, model expects " +
                         std::to_string(model.input_dim()));
  const RowMatrixXd row = x.transpose();
  return encode_rows(model, row).row(0).transpose();
}

}  // namespace sih

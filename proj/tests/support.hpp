#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "sih/common.hpp"
#include "sih/cutting_plane.hpp"

namespace sih::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sih_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline MatrixXd gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = g(rng);
  return m;
}

struct HingeProblem {
  MatrixXd phi;
  VectorXd targets;
};

// Labels from a random hyperplane with a fraction of them flipped.
inline HingeProblem random_hinge_problem(Index n, Index dim, std::uint64_t seed, double flip = 0.1) {
  std::mt19937_64 rng(seed);
  HingeProblem p;
  p.phi = gaussian_matrix(n, dim, rng);
  const VectorXd normal = gaussian_matrix(dim, 1, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  p.targets.resize(n);
  for (Index i = 0; i < n; ++i) {
    double y = p.phi.row(i).dot(normal) >= 0.0 ? 1.0 : -1.0;
    if (u(rng) < flip) y = -y;
    p.targets(i) = y;
  }
  return p;
}

// Long-run subgradient descent on 0.5|w|^2 + C R(w) with step
// 1/t; the objective is 1-strongly convex, so this converges to the optimum.
inline double subgradient_reference(const RiskOracle& oracle, double C, int steps, const VectorXd& w0) {
  VectorXd w = w0;
  double best = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= steps; ++t) {
    const RiskValue rv = oracle.evaluate(w);
    best = std::min(best, 0.5 * w.squaredNorm() + C * rv.risk);
    w -= (w + C * rv.subgradient) / static_cast<double>(t);
  }
  return std::min(best, oracle.objective(w, C));
}

// The same descent for the hinge risk sum_i max(0, 1 - y_i w.phi_i). Scores s = phi w
// and u = phi g are carried along with the Gram matrix, so a step costs O(n) plus
// O(n) per point entering or leaving the margin set; both are recomputed exactly
// every kRefresh steps.
inline double hinge_subgradient_reference(const MatrixXd& phi, const VectorXd& targets, double C, int steps,
                                          const VectorXd& w0) {
  constexpr int kRefresh = 4096;
  const Index n = phi.rows();
  const MatrixXd gram = phi * phi.transpose();
  VectorXd w = w0, g(phi.cols()), s(n), u(n);
  std::vector<char> active(static_cast<std::size_t>(n));
  auto refresh = [&] {
    s.noalias() = phi * w;
    g.setZero();
    for (Index i = 0; i < n; ++i) {
      active[static_cast<std::size_t>(i)] = targets(i) * s(i) < 1.0;
      if (active[static_cast<std::size_t>(i)]) g -= targets(i) * phi.row(i).transpose();
    }
    u.noalias() = phi * g;
  };
  auto value = [&] {
    double risk = 0.0;
    for (Index i = 0; i < n; ++i) risk += std::max(0.0, 1.0 - targets(i) * s(i));
    return 0.5 * w.squaredNorm() + C * risk;
  };
  double best = std::numeric_limits<double>::infinity();
  std::vector<Index> flipped;
  refresh();
  for (int t = 1; t <= steps; ++t) {
    const double keep = 1.0 - 1.0 / t, step = C / t;
    double risk = 0.0;
    flipped.clear();
    for (Index i = 0; i < n; ++i) {
      const double y = targets(i), margin = 1.0 - y * s(i);
      risk += std::max(0.0, margin);
      const double next = keep * s(i) - step * u(i);
      s(i) = next;
      if ((y * next < 1.0) != static_cast<bool>(active[static_cast<std::size_t>(i)])) flipped.push_back(i);
    }
    best = std::min(best, 0.5 * w.squaredNorm() + C * risk);
    w = keep * w - step * g;
    if (t % kRefresh == 0) {
      refresh();
      continue;
    }
    for (Index i : flipped) {
      const bool now = !active[static_cast<std::size_t>(i)];
      active[static_cast<std::size_t>(i)] = now;
      const double sign = now ? -targets(i) : targets(i);
      g += sign * phi.row(i).transpose();
      u += sign * gram.col(i);
    }
  }
  refresh();
  return std::min(best, value());
}

// Objective of the cheapest column assignment, by enumerating all 2^n of them.
inline double brute_force_column(const std::vector<double>& loss_neg, const std::vector<double>& loss_pos,
                                 double gamma) {
  const std::size_t n = loss_neg.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double value = 0.0;
    long sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool neg = (mask >> i) & 1U;
      value += neg ? loss_neg[i] : loss_pos[i];
      sum += neg ? -1 : 1;
    }
    value += gamma * static_cast<double>(std::labs(sum));
    best = std::min(best, value);
  }
  return best;
}

// Objective of a given cut over sorted losses, summed in the same left-to-right order.
inline double cut_value(const std::vector<double>& neg_sorted, const std::vector<double>& pos_sorted, double gamma,
                        Index cut) {
  const Index n = static_cast<Index>(neg_sorted.size());
  double value = gamma * static_cast<double>(std::abs(2 * cut - n));
  for (Index i = 0; i < n; ++i)
    value += i < cut ? neg_sorted[static_cast<std::size_t>(i)] : pos_sorted[static_cast<std::size_t>(i)];
  return value;
}

}  // namespace sih::testing

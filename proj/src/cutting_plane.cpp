#include "sih/cutting_plane.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <Eigen/QR>

namespace sih {

RiskValue binary_risk(const VectorXd& w, const MatrixXd& phi, const VectorXd& targets) {
  if (w.size() != phi.cols() || targets.size() != phi.rows())
    throw DimensionError("binary_risk: weight, data and target sizes disagree");
  const VectorXd scores = phi * w;
  VectorXd coeff = VectorXd::Zero(phi.rows());
  double risk = 0.0;
  for (Index i = 0; i < phi.rows(); ++i) {
    const double margin = targets(i) * scores(i);
    if (margin < 1.0) {
      risk += 1.0 - margin;
      coeff(i) = -targets(i);
    }
  }
  return RiskValue{risk, phi.transpose() * coeff};
}

MulticlassRiskValue multiclass_risk(const MatrixXd& W, const MatrixXd& codes, std::span<const int> labels) {
  if (W.rows() != codes.cols() || static_cast<Index>(labels.size()) != codes.rows())
    throw DimensionError("multiclass_risk: weight, code and label sizes disagree");
  const Index K = W.cols();
  const MatrixXd scores = codes * W;
  MatrixXd coeff = MatrixXd::Zero(codes.rows(), K);
  double risk = 0.0;
  for (Index i = 0; i < codes.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    double best = 0.0;
    Index arg = y;
    for (Index k = 0; k < K; ++k) {
      if (k == y) continue;
      const double v = 1.0 + scores(i, k) - scores(i, y);
      if (v > best) {
        best = v;
        arg = k;
      }
    }
    risk += best;
    if (arg != y) {
      coeff(i, arg) += 1.0;
      coeff(i, y) -= 1.0;
    }
  }
  return MulticlassRiskValue{risk, codes.transpose() * coeff};
}

namespace {

// argmin over k >= 0 of a convex g: doubling bracket, then golden section.
template <typename G>
double golden_section(G&& g) {
  // g is convex on k >= 0; grow the bracket until g turns upward.
  double hi = 1.0;
  double g_hi = g(hi);
  while (hi < 1e12) {
    const double g_next = g(2.0 * hi);
    if (g_next >= g_hi) break;
    hi *= 2.0;
    g_hi = g_next;
  }
  double lo = 0.0;
  hi *= 2.0;
  constexpr double inv_phi = 0.6180339887498949;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double g1 = g(x1);
  double g2 = g(x2);
  while (hi - lo > 1e-6) {
    if (g1 <= g2) {
      hi = x2;
      x2 = x1;
      g2 = g1;
      x1 = hi - inv_phi * (hi - lo);
      g1 = g(x1);
    } else {
      lo = x1;
      x1 = x2;
      g1 = g2;
      x2 = lo + inv_phi * (hi - lo);
      g2 = g(x2);
    }
  }
  const double k = g1 <= g2 ? x1 : x2;
  return std::min(g1, g2) > g(0.0) ? 0.0 : k;
}

}  // namespace

LineSearchResult RiskOracle::line_search(const VectorXd& w_from, const VectorXd& w_to, double C) const {
  const VectorXd dir = w_to - w_from;
  if (dir.squaredNorm() == 0.0) return LineSearchResult{0.0, w_from};
  const double k = golden_section([&](double t) { return objective(w_from + t * dir, C); });
  return LineSearchResult{k, w_from + k * dir};
}

HingeRisk::HingeRisk(const MatrixXd& phi, VectorXd targets)
    : phi_(phi), targets_(std::move(targets)), bound_(phi.rowwise().norm().sum()) {
  if (targets_.size() != phi_.rows()) throw DimensionError("HingeRisk: one target per row required");
}

double HingeRisk::risk(const VectorXd& w) const {
  const VectorXd scores = phi_ * w;
  double risk = 0.0;
  for (Index i = 0; i < scores.size(); ++i) risk += std::max(0.0, 1.0 - targets_(i) * scores(i));
  return risk;
}

LineSearchResult HingeRisk::line_search(const VectorXd& w_from, const VectorXd& w_to, double C) const {
  const VectorXd dir = w_to - w_from;
  const double quad = dir.squaredNorm();
  if (quad == 0.0) return LineSearchResult{0.0, w_from};
  const VectorXd from_scores = phi_ * w_from;
  const VectorXd dir_scores = phi_ * dir;

  // Along the ray each hinge is max(0, c_i + k e_i); g'(k) = quad k + slope.
  double slope = w_from.dot(dir);
  std::vector<std::pair<double, double>> breaks;
  breaks.reserve(static_cast<std::size_t>(phi_.rows()));
  for (Index i = 0; i < phi_.rows(); ++i) {
    const double c = 1.0 - targets_(i) * from_scores(i);
    const double e = -targets_(i) * dir_scores(i);
    if (c > 0.0 || (c == 0.0 && e > 0.0)) slope += C * e;
    if (e != 0.0) {
      const double k = -c / e;
      if (k > 0.0) breaks.emplace_back(k, C * std::abs(e));
    }
  }
  std::sort(breaks.begin(), breaks.end());
  double k_prev = 0.0;
  double step = -1.0;
  for (const auto& [k_break, jump] : breaks) {
    if (quad * k_break + slope >= 0.0) {
      step = std::max(k_prev, -slope / quad);
      break;
    }
    slope += jump;
    k_prev = k_break;
  }
  if (step < 0.0) step = std::max(k_prev, -slope / quad);
  return LineSearchResult{step, w_from + step * dir};
}

MulticlassRisk::MulticlassRisk(const MatrixXd& codes, std::vector<int> labels, Index num_classes)
    : codes_(codes), labels_(std::move(labels)), num_classes_(num_classes), bound_(2.0 * codes.rowwise().norm().sum()) {
  if (static_cast<Index>(labels_.size()) != codes_.rows())
    throw DimensionError("MulticlassRisk: one label per code row required");
  for (int y : labels_)
    if (y < 0 || y >= num_classes_) throw InvalidArgument("MulticlassRisk: label out of range");
}

RiskValue MulticlassRisk::evaluate(const VectorXd& w) const {
  const Eigen::Map<const MatrixXd> W(w.data(), codes_.cols(), num_classes_);
  auto value = multiclass_risk(W, codes_, labels_);
  return RiskValue{value.risk, value.subgradient.reshaped()};
}

double MulticlassRisk::risk(const VectorXd& w) const {
  const Eigen::Map<const MatrixXd> W(w.data(), codes_.cols(), num_classes_);
  const MatrixXd scores = codes_ * W;
  double risk = 0.0;
  for (Index i = 0; i < scores.rows(); ++i) {
    const int y = labels_[static_cast<std::size_t>(i)];
    double best = 0.0;
    for (Index k = 0; k < num_classes_; ++k)
      if (k != y) best = std::max(best, 1.0 + scores(i, k) - scores(i, y));
    risk += best;
  }
  return risk;
}

LineSearchResult MulticlassRisk::line_search(const VectorXd& w_from, const VectorXd& w_to, double C) const {
  const VectorXd dir = w_to - w_from;
  if (dir.squaredNorm() == 0.0) return LineSearchResult{0.0, w_from};
  // Margins are affine in the step: row i, class c has 1 + S0_ic - S0_iy + k (D_ic - D_iy), and 0 at c = y.
  const Eigen::Map<const MatrixXd> W0(w_from.data(), codes_.cols(), num_classes_);
  const Eigen::Map<const MatrixXd> Wd(dir.data(), codes_.cols(), num_classes_);
  MatrixXd offset = codes_ * W0, slope = codes_ * Wd;
  for (Index i = 0; i < offset.rows(); ++i) {
    const int y = labels_[static_cast<std::size_t>(i)];
    const double base = 1.0 - offset(i, y), drift = slope(i, y);
    offset.row(i).array() += base;
    slope.row(i).array() -= drift;
    offset(i, y) = 0.0;
    slope(i, y) = 0.0;
  }
  const double aa = w_from.squaredNorm(), ab = w_from.dot(dir), bb = dir.squaredNorm();
  auto g = [&](double k) {
    const double risk = (offset + k * slope).rowwise().maxCoeff().sum();
    return 0.5 * (aa + 2.0 * k * ab + k * k * bb) + C * risk;
  };
  const double k = golden_section(g);
  return LineSearchResult{k, w_from + k * dir};
}

CuttingPlaneSet::CuttingPlaneSet(Index capacity) : capacity_(std::max<Index>(capacity, 2)) {}

void CuttingPlaneSet::add(VectorXd normal, double offset, int iteration, VectorXd point) {
  if (!normals_.empty() && normal.size() != normals_.front().size())
    throw DimensionError("cutting plane dimension mismatch");
  if (size() >= capacity_) {
    // Oldest activity first; the newest plane is never a candidate.
    std::size_t victim = 0;
    for (std::size_t t = 1; t + 1 < normals_.size(); ++t)
      if (last_active_[t] < last_active_[victim]) victim = t;
    normals_.erase(normals_.begin() + static_cast<std::ptrdiff_t>(victim));
    offsets_.erase(offsets_.begin() + static_cast<std::ptrdiff_t>(victim));
    points_.erase(points_.begin() + static_cast<std::ptrdiff_t>(victim));
    alpha_.erase(alpha_.begin() + static_cast<std::ptrdiff_t>(victim));
    last_active_.erase(last_active_.begin() + static_cast<std::ptrdiff_t>(victim));
    const Index v = static_cast<Index>(victim);
    const Index keep = gram_.rows() - 1;
    MatrixXd reduced(keep, keep);
    std::vector<Index> idx;
    for (Index t = 0; t <= keep; ++t)
      if (t != v) idx.push_back(t);
    for (Index r = 0; r < keep; ++r)
      for (Index c = 0; c < keep; ++c) reduced(r, c) = gram_(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
    gram_ = std::move(reduced);
  }
  const Index t = size();
  gram_.conservativeResize(t + 1, t + 1);
  for (Index s = 0; s < t; ++s) {
    const double dot = normals_[static_cast<std::size_t>(s)].dot(normal);
    gram_(s, t) = dot;
    gram_(t, s) = dot;
  }
  gram_(t, t) = normal.squaredNorm();
  normals_.push_back(std::move(normal));
  offsets_.push_back(offset);
  points_.push_back(std::move(point));
  alpha_.push_back(0.0);
  last_active_.push_back(iteration);
}

double CuttingPlaneSet::model_risk(const VectorXd& w) const {
  double best = 0.0;
  for (std::size_t t = 0; t < normals_.size(); ++t) best = std::max(best, normals_[t].dot(w) + offsets_[t]);
  return best;
}

void CuttingPlaneSet::mark_active(int iteration) {
  for (std::size_t t = 0; t < alpha_.size(); ++t)
    if (alpha_[t] > 0.0) last_active_[t] = iteration;
}

void CuttingPlaneSet::reset_activity() { std::fill(last_active_.begin(), last_active_.end(), 0); }

namespace {

double reduced_dual(const MatrixXd& H, const VectorXd& b, const VectorXd& alpha) {
  const Index T = b.size();
  return b.dot(alpha.head(T)) - 0.5 * alpha.head(T).dot(H * alpha.head(T));
}

enum class Polish { rejected, partial, full };

// Moves alpha toward the maximizer of the dual restricted to its current
// support, as far as nonnegativity allows. The dual never decreases; a
// partial step drops the blocking index from the support.
Polish polish_support(const MatrixXd& H, const VectorXd& b, double C, VectorXd& alpha) {
  const Index T = b.size();
  std::vector<Index> support;
  for (Index t = 0; t < T; ++t)
    if (alpha(t) > 0.0) support.push_back(t);
  const Index k = static_cast<Index>(support.size());
  if (k == 0) return Polish::rejected;
  const bool slack = alpha(T) > 0.0;
  const Index dim = slack ? k : k + 1;
  MatrixXd A = MatrixXd::Zero(dim, dim);
  VectorXd rhs(dim);
  for (Index r = 0; r < k; ++r) {
    for (Index c = 0; c < k; ++c) A(r, c) = H(support[static_cast<std::size_t>(r)], support[static_cast<std::size_t>(c)]);
    rhs(r) = b(support[static_cast<std::size_t>(r)]);
  }
  if (!slack) {
    A.block(0, k, k, 1).setOnes();
    A.block(k, 0, 1, k).setOnes();
    rhs(k) = C;
  }
  const VectorXd x = A.completeOrthogonalDecomposition().solve(rhs);
  if (!x.allFinite()) return Polish::rejected;

  VectorXd target = alpha;
  for (Index r = 0; r < k; ++r) target(support[static_cast<std::size_t>(r)]) = x(r);
  target(T) = slack ? C - x.head(k).sum() : 0.0;
  const VectorXd dir = target - alpha;
  double theta = 1.0;
  for (Index t = 0; t <= T; ++t)
    if (dir(t) < 0.0) theta = std::min(theta, -alpha(t) / dir(t));
  if (!(theta > 0.0)) return Polish::rejected;
  VectorXd next = alpha + theta * dir;
  for (Index t = 0; t <= T; ++t)
    if (next(t) < 0.0 || (dir(t) < 0.0 && -alpha(t) / dir(t) == theta)) next(t) = 0.0;
  if (!(reduced_dual(H, b, next) > reduced_dual(H, b, alpha))) return Polish::rejected;
  alpha = std::move(next);
  return theta < 1.0 ? Polish::partial : Polish::full;
}

}  // namespace

ReducedSolution reduced_minimizer(CuttingPlaneSet& planes, double C, double tolerance) {
  const Index T = planes.size();
  if (T == 0) throw InvalidArgument("reduced_minimizer needs at least one plane");
  const MatrixXd& H = planes.gram();
  VectorXd b(T);
  for (Index t = 0; t < T; ++t) b(t) = planes.offset(t);

  // alpha(T) is the slack weight of the implicit plane a = 0, b = 0, so the
  // constraint becomes sum alpha = C over T + 1 variables.
  VectorXd alpha(T + 1);
  auto& stored = planes.weights();
  for (Index t = 0; t < T; ++t) alpha(t) = std::max(0.0, stored[static_cast<std::size_t>(t)]);
  const double total = alpha.head(T).sum();
  if (total > C) alpha.head(T) *= C / total;
  alpha(T) = std::max(0.0, C - alpha.head(T).sum());

  VectorXd Ha = H * alpha.head(T);
  auto h = [&](Index r, Index c) { return (r == T || c == T) ? 0.0 : H(r, c); };

  // Active-set scheme: each pair step admits the most violating plane, then
  // Newton steps on the support run until it is stationary there.
  const int max_updates = 200000 + 1000 * static_cast<int>(T);
  int updates = 0;
  for (; updates < max_updates; ++updates) {
    if (updates > 0) {
      for (Index drop = 0; drop <= T; ++drop)
        if (polish_support(H, b, C, alpha) != Polish::partial) break;
      Ha = H * alpha.head(T);
      alpha(T) = std::max(0.0, C - alpha.head(T).sum());
    }
    // Steepest ascent index first, then the partner with the largest
    // second-order gain among those that can give weight away.
    Index up = T;
    double g_up = 0.0;
    for (Index t = 0; t < T; ++t) {
      const double g = b(t) - Ha(t);
      if (g > g_up) {
        g_up = g;
        up = t;
      }
    }
    const double aHa = alpha.head(T).dot(Ha);
    const double primal = 0.5 * aHa + C * g_up;
    const double dual = b.dot(alpha.head(T)) - 0.5 * aHa;
    if (primal - dual <= tolerance * std::max(1.0, std::abs(primal))) break;
    Index down = -1;
    double best_gain = 0.0, g_down = 0.0;
    for (Index t = 0; t <= T; ++t) {
      if (!(alpha(t) > 0.0) || t == up) continue;
      const double g = t == T ? 0.0 : b(t) - Ha(t);
      const double diff = g_up - g;
      if (diff <= 0.0) continue;
      const double eta = h(up, up) + h(t, t) - 2.0 * h(up, t);
      const double gain = eta > 1e-300 ? diff * diff / eta : std::numeric_limits<double>::infinity();
      if (down < 0 || gain > best_gain) {
        down = t;
        best_gain = gain;
        g_down = g;
      }
    }
    if (down < 0) break;
    const double eta = h(up, up) + h(down, down) - 2.0 * h(up, down);
    double delta = alpha(down);
    if (eta > 0.0) delta = std::min(delta, (g_up - g_down) / eta);
    if (delta <= 0.0) break;
    alpha(up) += delta;
    alpha(down) -= delta;
    if (up < T) Ha += delta * H.col(up);
    if (down < T) Ha -= delta * H.col(down);
  }

  ReducedSolution sol;
  sol.updates = updates;
  sol.w = VectorXd::Zero(planes.normal(0).size());
  for (Index t = 0; t < T; ++t) {
    stored[static_cast<std::size_t>(t)] = alpha(t);
    if (alpha(t) != 0.0) sol.w.noalias() -= alpha(t) * planes.normal(t);
  }
  const double half_sq = 0.5 * sol.w.squaredNorm();
  sol.primal = half_sq + C * planes.model_risk(sol.w);
  sol.dual = b.dot(alpha.head(T)) - half_sq;
  return sol;
}

LineSearchResult exact_line_search(const VectorXd& w_from, const VectorXd& w_to, const RiskOracle& oracle, double C) {
  return oracle.line_search(w_from, w_to, C);
}

double default_epsilon(const RiskOracle& oracle, double C) {
  return 1e-3 * std::max(1.0, C * oracle.risk(VectorXd::Zero(oracle.dim())));
}

namespace {

SolverState run_solver(const RiskOracle& oracle, const VectorXd& w0, const SolverConfig& config,
                       const CuttingPlaneSet* warm_planes, std::span<const VectorXd> cut_points = {}) {
  if (!(config.C > 0.0)) throw InvalidArgument("solver C must be positive");
  if (config.max_iterations < 1 || config.max_planes < 2) throw InvalidArgument("solver limits must be positive");
  if (w0.size() != oracle.dim())
    throw DimensionError("initial point has " + std::to_string(w0.size()) + " entries, expected " +
                         std::to_string(oracle.dim()));
  const double C = config.C;
  SolverState state;
  state.epsilon = config.epsilon > 0.0 ? config.epsilon : default_epsilon(oracle, C);
  state.subgradient_bound = oracle.subgradient_bound();

  CuttingPlaneSet planes(config.max_planes);
  if (warm_planes)
    for (Index t = 0; t < warm_planes->size(); ++t)
      planes.add(warm_planes->normal(t), warm_planes->offset(t), 0, warm_planes->point(t));
  state.w_best = w0;
  RiskValue rv = oracle.evaluate(state.w_best);
  state.f_best = 0.5 * state.w_best.squaredNorm() + C * rv.risk;
  state.f_start = state.f_best;
  if (!warm_planes || warm_planes->size() == 0) {
    const double offset = rv.risk - rv.subgradient.dot(state.w_best);
    planes.add(std::move(rv.subgradient), offset, 0, state.w_best);
  }
  for (const VectorXd& at : cut_points) {
    if (at.size() != oracle.dim()) throw DimensionError("cut point does not match the oracle dimension");
    RiskValue cut = oracle.evaluate(at);
    const double offset = cut.risk - cut.subgradient.dot(at);
    planes.add(std::move(cut.subgradient), offset, 0, at);
  }
  // A stale warm start never begins worse than the origin.
  if (!w0.isZero(0.0)) {
    RiskValue origin = oracle.evaluate(VectorXd::Zero(w0.size()));
    if (C * origin.risk < state.f_best) {
      state.w_best.setZero();
      state.f_best = C * origin.risk;
      planes.add(std::move(origin.subgradient), origin.risk, 0, state.w_best);
    }
  }

  for (int it = 1; it <= config.max_iterations; ++it) {
    // The reduced dual value is a lower bound on min F however the inner
    // solve ends, so the gap never understates the true one.
    ReducedSolution sol = reduced_minimizer(planes, C);
    planes.mark_active(it);
    state.w_current = std::move(sol.w);
    state.gap = state.f_best - sol.dual;
    state.iterations = it;
    state.trace.push_back(TraceEntry{it, state.f_best, sol.dual, state.gap});
    if (state.gap <= state.epsilon) {
      state.converged = true;
      break;
    }

    LineSearchResult ls = oracle.line_search(state.w_best, state.w_current, C);
    const double f_ls = oracle.objective(ls.w, C);
    if (f_ls < state.f_best) {
      state.w_best = std::move(ls.w);
      state.f_best = f_ls;
    }

    VectorXd w_cut = (1.0 - config.cut_mix) * state.w_best + config.cut_mix * state.w_current;
    rv = oracle.evaluate(w_cut);
    const double f_cut = 0.5 * w_cut.squaredNorm() + C * rv.risk;
    if (f_cut < state.f_best) {
      state.w_best = w_cut;
      state.f_best = f_cut;
    }
    const double offset = rv.risk - rv.subgradient.dot(w_cut);
    planes.add(std::move(rv.subgradient), offset, it, std::move(w_cut));
  }
  for (Index t = 0; t < planes.size(); ++t)
    if (planes.weights()[static_cast<std::size_t>(t)] > 0.0) state.support_points.push_back(planes.point(t));
  planes.reset_activity();
  state.planes = std::move(planes);
  return state;
}

}  // namespace

SolverState cp_solve(const RiskOracle& oracle, const VectorXd& w0, const SolverConfig& config) {
  return run_solver(oracle, w0, config, nullptr);
}

SolverState cp_solve(const RiskOracle& oracle, const VectorXd& w0, const SolverConfig& config,
                     std::span<const VectorXd> cut_points) {
  return run_solver(oracle, w0, config, nullptr, cut_points);
}

SolverState cp_solve(const RiskOracle& oracle, const SolverState& previous, const SolverConfig& config) {
  if (previous.planes.size() > 0 && previous.planes.normal(0).size() != oracle.dim())
    throw DimensionError("previous cutting planes do not match the oracle dimension");
  return run_solver(oracle, previous.w_best, config, &previous.planes);
}

double iteration_bound(double f0, double C, double G, double epsilon) {
  if (!(f0 > 0.0) || !(C > 0.0) || !(G > 0.0) || !(epsilon > 0.0))
    throw InvalidArgument("iteration_bound arguments must all be positive");
  const double scale = 4.0 * C * C * G * G;
  return std::max(1.0, std::log2(f0 / scale) + 2.0 * scale / epsilon - 2.0);
}

void write_trace_csv(std::ostream& out, const SolverState& state) {
  out << "iteration,f_best,f_model,gap\n";
  out.precision(17);
  for (const auto& e : state.trace) out << e.iteration << ',' << e.f_best << ',' << e.f_model << ',' << e.gap << '\n';
}

}  // namespace sih

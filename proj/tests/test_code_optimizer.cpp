#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "sih/code_optimizer.hpp"
#include "support.hpp"

using namespace sih;

namespace {

// Values on a 1/1024 grid keep every sum below exact in double precision.
double dyadic(std::mt19937_64& rng, int lo, int hi) {
  std::uniform_int_distribution<int> k(lo * 1024, hi * 1024);
  return k(rng) / 1024.0;
}

struct Instance {
  CodeMatrix codes;
  MatrixXd scores;
  MatrixXd wb;
  std::vector<int> labels;
  BitLossParams params;

  BitLossInputs inputs() const { return BitLossInputs(codes, scores, wb, labels, params); }
};

Instance random_instance(Index n, Index m, Index K, std::uint64_t seed, double gamma = 0.5) {
  std::mt19937_64 rng(seed);
  Instance inst;
  CodeBits bits(n, m);
  std::bernoulli_distribution coin(0.5);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) bits(i, j) = coin(rng) ? 1 : -1;
  inst.codes = CodeMatrix(bits);
  inst.scores.resize(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) inst.scores(i, j) = dyadic(rng, -2, 2);
  inst.wb.resize(m + 1, K);
  for (Index k = 0; k < K; ++k)
    for (Index j = 0; j <= m; ++j) inst.wb(j, k) = dyadic(rng, -1, 1);
  std::uniform_int_distribution<int> label(0, static_cast<int>(K) - 1);
  for (Index i = 0; i < n; ++i) inst.labels.push_back(i < K ? static_cast<int>(i) : label(rng));
  inst.params = BitLossParams{2.0, 0.5, 1.5, gamma};
  return inst;
}

// L(z, i, j) straight from the slack definitions, on a copy of row i with b_ij = z.
double direct_loss(const Instance& inst, int z, Index i, Index j) {
  VectorXd b(inst.codes.cols() + 1);
  for (Index c = 0; c < inst.codes.cols(); ++c) b(c) = inst.codes(i, c);
  b(j) = z;
  b(inst.codes.cols()) = 1.0;
  const int y = inst.labels[static_cast<std::size_t>(i)];
  double xi_b = 0.0;
  for (Index k = 0; k < inst.wb.cols(); ++k)
    xi_b = std::max(xi_b, (k == y ? 0.0 : 1.0) + (inst.wb.col(k) - inst.wb.col(y)).dot(b));
  const double xi_x = std::max(0.0, 1.0 - z * inst.scores(i, j));
  return inst.params.lambda * inst.params.cb * xi_b + inst.params.cx * xi_x;
}

double direct_objective(const Instance& inst, const CodeMatrix& codes) {
  Instance copy = inst;
  copy.codes = codes;
  double total = 0.0;
  for (Index i = 0; i < codes.rows(); ++i) {
    VectorXd b(codes.cols() + 1);
    for (Index c = 0; c < codes.cols(); ++c) b(c) = codes(i, c);
    b(codes.cols()) = 1.0;
    const int y = inst.labels[static_cast<std::size_t>(i)];
    double xi_b = 0.0;
    for (Index k = 0; k < inst.wb.cols(); ++k)
      xi_b = std::max(xi_b, (k == y ? 0.0 : 1.0) + (inst.wb.col(k) - inst.wb.col(y)).dot(b));
    total += inst.params.lambda * inst.params.cb * xi_b;
    for (Index j = 0; j < codes.cols(); ++j)
      total += inst.params.cx * std::max(0.0, 1.0 - codes(i, j) * inst.scores(i, j));
  }
  for (Index j = 0; j < codes.cols(); ++j) {
    double s = 0.0;
    for (Index i = 0; i < codes.rows(); ++i) s += codes(i, j);
    total += inst.params.gamma * std::abs(s);
  }
  return total;
}

}  // namespace

TEST_CASE("code matrix tracks column revisions") {
  CodeMatrix c(4, 3);
  CHECK(c.revision(1) == 0);
  c.set(2, 1, 1);
  CHECK(c.revision(1) == 0);
  c.set(2, 1, -1);
  CHECK(c.revision(1) == 1);
  CodeVector col = c.bits().col(2);
  CHECK_FALSE(c.set_column(2, col));
  col(0) = -1;
  CHECK(c.set_column(2, col));
  CHECK(c.revision(2) == 1);
  CHECK(c.revision(0) == 0);
  CHECK_THROWS_AS(c.set(0, 0, 0), InvalidArgument);
  const MatrixXd wb = c.with_bias();
  CHECK(wb.cols() == 4);
  CHECK((wb.col(3).array() == 1.0).all());
}

TEST_CASE("zero class weights with a satisfied bit margin") {
  Instance inst = random_instance(5, 3, 3, 1);
  inst.wb.setZero();
  inst.scores(2, 1) = 1.5;
  const BitLossInputs in = inst.inputs();
  const double expected = inst.params.lambda * inst.params.cb;
  CHECK(bit_flip_loss(1, 2, 1, inst.codes, in) == expected);
}

TEST_CASE("zero bit weights cost exactly cx for either sign") {
  Instance inst = random_instance(5, 3, 3, 2);
  inst.wb.setZero();
  inst.scores.col(0).setZero();
  const BitLossInputs in = inst.inputs();
  const double expected = inst.params.lambda * inst.params.cb + inst.params.cx;
  for (Index i = 0; i < 5; ++i) {
    CHECK(bit_flip_loss(-1, i, 0, inst.codes, in) == expected);
    CHECK(bit_flip_loss(1, i, 0, inst.codes, in) == expected);
  }
}

TEST_CASE("bit loss matches a direct slack evaluation exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance inst = random_instance(9, 4, 4, seed);
    const BitLossInputs in = inst.inputs();
    for (Index i = 0; i < 9; ++i)
      for (Index j = 0; j < 4; ++j)
        for (int z : {-1, 1}) CHECK(bit_flip_loss(z, i, j, inst.codes, in) == direct_loss(inst, z, i, j));
  }
}

TEST_CASE("symmetric losses give zero deltas and the identity order") {
  Instance inst = random_instance(6, 3, 3, 4);
  inst.wb.row(1).setZero();
  inst.scores.col(1).setZero();
  const ColumnDeltas cd = column_deltas(1, inst.codes, inst.inputs());
  CHECK(cd.delta.isZero());
  for (std::size_t p = 0; p < cd.order.size(); ++p) CHECK(cd.order[p] == static_cast<Index>(p));
}

TEST_CASE("deltas are loss differences in stable ascending order") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Instance inst = random_instance(15, 3, 3, seed);
    const BitLossInputs in = inst.inputs();
    const ColumnDeltas cd = column_deltas(2, inst.codes, in, 2);
    std::vector<Index> ref(15);
    std::iota(ref.begin(), ref.end(), Index{0});
    std::sort(ref.begin(), ref.end(), [&](Index a, Index b) {
      return cd.delta(a) < cd.delta(b) || (cd.delta(a) == cd.delta(b) && a < b);
    });
    CHECK(cd.order == ref);
    for (Index i = 0; i < 15; ++i)
      CHECK(cd.delta(i) == bit_flip_loss(-1, i, 2, inst.codes, in) - bit_flip_loss(1, i, 2, inst.codes, in));
  }
}

TEST_CASE("large gamma forces a balanced cut") {
  std::mt19937_64 rng(3);
  for (Index n : {2, 7, 10, 31}) {
    std::vector<double> neg(static_cast<std::size_t>(n)), pos(static_cast<std::size_t>(n));
    for (auto& v : neg) v = dyadic(rng, 0, 5);
    for (auto& v : pos) v = dyadic(rng, 0, 5);
    const Index cut = optimal_cut(neg, pos, 1e6);
    CHECK(std::abs(2 * cut - n) == n % 2);
  }
}

TEST_CASE("sorted prefix cut equals exhaustive search") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = size(rng);
    std::vector<double> neg(static_cast<std::size_t>(n)), pos(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < neg.size(); ++i) {
      neg[i] = dyadic(rng, 0, 5);
      pos[i] = dyadic(rng, 0, 5);
    }
    std::vector<std::size_t> idx(neg.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return neg[a] - pos[a] < neg[b] - pos[b]; });
    std::vector<double> ns, ps;
    for (auto i : idx) {
      ns.push_back(neg[i]);
      ps.push_back(pos[i]);
    }
    for (double gamma : {0.0, 0.5, 50.0}) {
      const Index cut = optimal_cut(ns, ps, gamma);
      CHECK(testing::cut_value(ns, ps, gamma, cut) == testing::brute_force_column(neg, pos, gamma));
    }
  }
}

TEST_CASE("cut ties prefer balance, then the smaller prefix") {
  const std::vector<double> zeros(4, 0.0);
  CHECK(optimal_cut(zeros, zeros, 0.0) == 2);
  const std::vector<double> odd(3, 0.0);
  CHECK(optimal_cut(odd, odd, 0.0) == 1);
}

TEST_CASE("optimize_column is exact for the fixed-weights column objective") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Instance inst = random_instance(10, 3, 3, seed, seed % 3 == 0 ? 0.0 : 2.0);
    const BitLossInputs in = inst.inputs();
    const CodeVector col = optimize_column(1, inst.codes, in);
    std::vector<double> neg, pos;
    for (Index i = 0; i < 10; ++i) {
      neg.push_back(bit_flip_loss(-1, i, 1, inst.codes, in));
      pos.push_back(bit_flip_loss(1, i, 1, inst.codes, in));
    }
    double value = inst.params.gamma * std::abs(col.cast<double>().sum());
    for (Index i = 0; i < 10; ++i) value += col(i) < 0 ? neg[static_cast<std::size_t>(i)] : pos[static_cast<std::size_t>(i)];
    CHECK(value == testing::brute_force_column(neg, pos, inst.params.gamma));
  }
}

TEST_CASE("flip keeps cached class scores current") {
  Instance inst = random_instance(8, 4, 3, 9);
  BitLossInputs in = inst.inputs();
  for (auto [i, j] : {std::pair<Index, Index>{0, 0}, {3, 2}, {3, 3}, {7, 1}}) {
    const int old = inst.codes(i, j);
    in.flip(i, j, old);
    inst.codes.set(i, j, static_cast<std::int8_t>(-old));
  }
  const BitLossInputs fresh = inst.inputs();
  CHECK(in.class_scores() == fresh.class_scores());
}

TEST_CASE("dcc never increases the fixed-weights objective") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Instance inst = random_instance(25, 5, 4, seed, seed % 2 ? 0.0 : 1.0);
    BitLossInputs in = inst.inputs();
    const double before = codes_objective(inst.codes, in);
    CHECK(before == direct_objective(inst, inst.codes));
    CodeMatrix codes = inst.codes;
    const DccResult r = dcc_optimize(codes, in, 10);
    const double after = codes_objective(codes, in);
    CHECK(after <= before);
    CHECK(after == direct_objective(inst, codes));
    CHECK(in.class_scores() == BitLossInputs(codes, inst.scores, inst.wb, inst.labels, inst.params).class_scores());
    CHECK(r.sweeps >= 1);
  }
}

TEST_CASE("dcc fixed point is stable") {
  Instance inst = random_instance(20, 4, 3, 5);
  BitLossInputs in = inst.inputs();
  CodeMatrix codes = inst.codes;
  const DccResult first = dcc_optimize(codes, in, 100);
  REQUIRE(first.sweeps < 100);
  const CodeMatrix settled = codes;
  const DccResult again = dcc_optimize(codes, in, 5);
  CHECK(again.sweeps == 1);
  CHECK(codes == settled);
  CHECK(std::none_of(again.changed.begin(), again.changed.end(), [](bool c) { return c; }));
}

TEST_CASE("single bit dcc is one column optimization") {
  Instance inst = random_instance(12, 1, 3, 6);
  BitLossInputs in = inst.inputs();
  const CodeVector expected = optimize_column(0, inst.codes, in);
  CodeMatrix codes = inst.codes;
  dcc_optimize(codes, in, 1);
  CHECK(codes.bits().col(0) == expected);
}

TEST_CASE("dcc with dominant gamma balances every column") {
  for (Index n : {20, 21}) {
    Instance inst = random_instance(n, 4, 3, static_cast<std::uint64_t>(n), 1e6);
    BitLossInputs in = inst.inputs();
    CodeMatrix codes = inst.codes;
    dcc_optimize(codes, in, 5);
    for (Index j = 0; j < 4; ++j) CHECK(std::abs(codes.bits().col(j).cast<int>().sum()) == n % 2);
  }
}

TEST_CASE("dcc result does not depend on thread count") {
  Instance inst = random_instance(40, 6, 5, 12);
  BitLossInputs a = inst.inputs(), b = inst.inputs();
  CodeMatrix ca = inst.codes, cb = inst.codes;
  dcc_optimize(ca, a, 5, 1);
  dcc_optimize(cb, b, 5, 4);
  CHECK(ca == cb);
}

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "sih/retrieval.hpp"
#include "support.hpp"

using namespace sih;

namespace {

CodeBits random_bits(Index n, Index m, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  CodeBits b(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) b(i, j) = coin(rng) ? 1 : -1;
  return b;
}

int naive_distance(const CodeBits& b, Index p, Index q) {
  int d = 0;
  for (Index j = 0; j < b.cols(); ++j) d += b(p, j) != b(q, j);
  return d;
}

}  // namespace

TEST_CASE("hamming distance basics") {
  CodeVector a = CodeVector::Ones(32);
  CHECK(hamming_distance(pack(a), pack(a)) == 0);
  CHECK(hamming_distance(pack(a), pack(CodeVector(-a))) == 32);
  CHECK_THROWS_AS(hamming_distance(pack(a), pack(CodeVector::Ones(31))), DimensionError);
  CHECK(unpack(pack(a)) == a);
}

TEST_CASE("hamming distance matches a per-bit oracle") {
  std::mt19937_64 rng(1);
  for (Index m : {1, 7, 63, 64, 65, 130}) {
    const CodeBits b = random_bits(40, m, rng);
    const CodeDatabase db = CodeDatabase::from_bits(b);
    CHECK(db.to_bits() == b);
    for (Index p = 0; p < 40; ++p)
      for (Index q = 0; q < 40; ++q) CHECK(hamming_distance(db.packed(p), db.packed(q)) == naive_distance(b, p, q));
  }
}

TEST_CASE("padding bits must be clear") {
  CHECK_THROWS_AS(CodeDatabase(3, {0b1000}), FormatError);
  CHECK_NOTHROW(CodeDatabase(3, {0b0111}));
}

TEST_CASE("ranking is a stable distance sort") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const CodeBits b = random_bits(30, 6, rng);
    const CodeDatabase db = CodeDatabase::from_bits(b);
    const PackedCode q = db.packed(trial % 30);
    const auto order = rank_by_hamming(q, db);
    std::vector<Index> ref(30);
    std::iota(ref.begin(), ref.end(), Index{0});
    std::stable_sort(ref.begin(), ref.end(),
                     [&](Index x, Index y) { return naive_distance(b, trial % 30, x) < naive_distance(b, trial % 30, y); });
    CHECK(order == ref);
    CHECK(order.front() == std::min<Index>(trial % 30, order.front()));
    CHECK(naive_distance(b, trial % 30, order.front()) == 0);
  }
}

TEST_CASE("average precision hand values") {
  const std::vector<std::uint8_t> s{1, 0, 1};
  CHECK(average_precision(s) == doctest::Approx(0.5 * (1.0 + 2.0 / 3.0)).epsilon(1e-12));
  CHECK(average_precision(std::vector<std::uint8_t>{1, 1, 1}) == 1.0);
  CHECK(average_precision(std::vector<std::uint8_t>{0, 0}) == 0.0);
  CHECK(average_precision(std::vector<std::uint8_t>{0, 1}) == 0.5);
}

TEST_CASE("precision at radius against filter and count") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dist(0, 8);
  std::bernoulli_distribution rel(0.4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> d(25);
    std::vector<std::uint8_t> r(25);
    for (std::size_t i = 0; i < 25; ++i) {
      d[i] = dist(rng);
      r[i] = rel(rng);
    }
    for (int radius = 0; radius <= 8; ++radius) {
      int hit = 0, got = 0;
      for (std::size_t i = 0; i < 25; ++i)
        if (d[i] <= radius) {
          ++got;
          hit += r[i];
        }
      const double expected = got == 0 ? 0.0 : static_cast<double>(hit) / got;
      CHECK(precision_at_radius(d, r, radius) == expected);
    }
  }
  const std::vector<int> d{0, 3};
  const std::vector<std::uint8_t> r{1, 0};
  CHECK(precision_at_radius(d, r, 0) == 1.0);
  CHECK(precision_at_radius(d, r, 3) == 0.5);
}

TEST_CASE("two-item evaluations") {
  CodeBits b(2, 4);
  b << 1, 1, -1, 1, 1, -1, -1, 1;
  const EvalReport same = evaluate(CodeDatabase::from_bits(b, {0, 0}));
  REQUIRE(same.map.has_value());
  CHECK(*same.map == 1.0);
  CHECK(same.excluded_queries == 0);
  const EvalReport diff = evaluate(CodeDatabase::from_bits(b, {0, 1}));
  CHECK_FALSE(diff.map.has_value());
  CHECK(diff.excluded_queries == 2);
  CHECK(nlohmann::json::parse(report_to_json(diff))["map"].is_null());
  CHECK_THROWS_AS(evaluate(CodeDatabase::from_bits(b.topRows(1), {0})), InvalidArgument);
}

TEST_CASE("evaluation cross-checks with direct per-query computation") {
  std::mt19937_64 rng(4);
  const Index n = 40, m = 5;
  const CodeBits b = random_bits(n, m, rng);
  std::vector<int> labels(n);
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 4);
  labels[39] = 9;  // a class of one: no relevant items for that query
  const CodeDatabase db = CodeDatabase::from_bits(b, labels);
  const EvalReport rep = evaluate(db, 3);
  CHECK(rep.queries == n);
  CHECK(rep.excluded_queries == 1);

  double ap_sum = 0.0;
  std::vector<double> prec(m + 1, 0.0), rec(m + 1, 0.0);
  for (Index q = 0; q < n; ++q) {
    std::vector<int> d;
    std::vector<std::uint8_t> rel;
    std::vector<Index> others;
    for (Index i = 0; i < n; ++i)
      if (i != q) others.push_back(i);
    std::stable_sort(others.begin(), others.end(),
                     [&](Index x, Index y) { return naive_distance(b, q, x) < naive_distance(b, q, y); });
    int total = 0;
    for (Index i : others) {
      d.push_back(naive_distance(b, q, i));
      rel.push_back(labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(q)]);
      total += rel.back();
    }
    for (Index r = 0; r <= m; ++r) prec[static_cast<std::size_t>(r)] += precision_at_radius(d, rel, static_cast<int>(r));
    if (total == 0) continue;
    ap_sum += average_precision(rel);
    for (Index r = 0; r <= m; ++r) {
      int hit = 0;
      for (std::size_t i = 0; i < d.size(); ++i) hit += d[i] <= r && rel[i];
      rec[static_cast<std::size_t>(r)] += static_cast<double>(hit) / total;
    }
  }
  REQUIRE(rep.map.has_value());
  CHECK(*rep.map == doctest::Approx(ap_sum / (n - 1)).epsilon(1e-12));
  for (Index r = 0; r <= m; ++r) {
    CHECK(rep.precision_at_radius[static_cast<std::size_t>(r)] == doctest::Approx(prec[static_cast<std::size_t>(r)] / n).epsilon(1e-12));
    CHECK(rep.pr_curve[static_cast<std::size_t>(r)].first == doctest::Approx(rec[static_cast<std::size_t>(r)] / (n - 1)).epsilon(1e-12));
  }
  CHECK(rep.pr_curve.back().first == doctest::Approx(1.0));
  CHECK(evaluate(db, 1).map == rep.map);
}

TEST_CASE("map is invariant to a consistent permutation of tie-free codes") {
  // Search for codes whose distances from every query are pairwise distinct,
  // so the ranking has no ties to break.
  const Index n = 6, m = 12;
  std::mt19937_64 rng(5);
  CodeBits b;
  bool found = false;
  for (int attempt = 0; attempt < 200000 && !found; ++attempt) {
    b = random_bits(n, m, rng);
    found = true;
    for (Index q = 0; q < n && found; ++q) {
      std::vector<int> d;
      for (Index i = 0; i < n; ++i)
        if (i != q) d.push_back(naive_distance(b, q, i));
      std::sort(d.begin(), d.end());
      found = std::adjacent_find(d.begin(), d.end()) == d.end();
    }
  }
  REQUIRE(found);
  const std::vector<int> labels{0, 1, 0, 1, 1, 0};
  std::vector<Index> perm(n);
  std::iota(perm.begin(), perm.end(), Index{0});
  const EvalReport base = evaluate(CodeDatabase::from_bits(b, labels));
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    CodeBits pb(n, m);
    std::vector<int> pl(n);
    for (Index i = 0; i < n; ++i) {
      pb.row(i) = b.row(perm[static_cast<std::size_t>(i)]);
      pl[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    CHECK(*evaluate(CodeDatabase::from_bits(pb, pl)).map == *base.map);
  }
}

TEST_CASE("code files round trip") {
  testing::TempDir dir;
  std::mt19937_64 rng(6);
  for (Index m : {3, 64, 100}) {
    const CodeDatabase db = CodeDatabase::from_bits(random_bits(17, m, rng));
    save_codes(db, dir / "c.sihc");
    const CodeDatabase back = load_codes(dir / "c.sihc");
    CHECK(back.bits() == m);
    CHECK(back.words() == db.words());
  }
  {
    std::ofstream bad(dir / "bad.sihc", std::ios::binary);
    bad << "SIHX";
  }
  CHECK_THROWS_AS(load_codes(dir / "bad.sihc"), FormatError);
}

TEST_CASE("report json layout") {
  CodeBits b(3, 2);
  b << 1, 1, 1, -1, -1, -1;
  const EvalReport rep = evaluate(CodeDatabase::from_bits(b, {0, 0, 1}));
  const auto j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j.contains("map"));
  CHECK(j["precision_at_radius"].contains("2"));
  CHECK(j["pr_curve"].size() == 3);
  CHECK(j["queries"] == 3);
  CHECK(j["excluded_queries"] == 1);
  CHECK(j["seconds"].is_number());
}

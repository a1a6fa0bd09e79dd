#include "sih/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <fstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace sih {

namespace {

constexpr std::string_view kCodesMagic = "SIHC";

Index words_for(Index bits) { return (bits + 63) / 64; }

}  // namespace

PackedCode pack(const CodeVector& code) {
  PackedCode out;
  out.bits = code.size();
  out.words.assign(static_cast<std::size_t>(words_for(out.bits)), 0);
  for (Index j = 0; j < code.size(); ++j)
    if (code(j) > 0) out.words[static_cast<std::size_t>(j / 64)] |= std::uint64_t{1} << (j % 64);
  return out;
}

CodeVector unpack(const PackedCode& code) {
  CodeVector out(code.bits);
  for (Index j = 0; j < code.bits; ++j)
    out(j) = (code.words[static_cast<std::size_t>(j / 64)] >> (j % 64)) & 1U ? 1 : -1;
  return out;
}

int hamming_words(const std::uint64_t* a, const std::uint64_t* b, std::size_t words) {
  int sum = 0;
  for (std::size_t w = 0; w < words; ++w) sum += std::popcount(a[w] ^ b[w]);
  return sum;
}

int hamming_distance(const PackedCode& a, const PackedCode& b) {
  if (a.bits != b.bits || a.words.size() != b.words.size())
    throw DimensionError("hamming_distance: codes of length " + std::to_string(a.bits) + " and " +
                         std::to_string(b.bits));
  return hamming_words(a.words.data(), b.words.data(), a.words.size());
}

CodeDatabase::CodeDatabase(Index bits, std::vector<std::uint64_t> words, std::vector<int> labels)
    : bits_(bits), words_per_code_(words_for(bits)), words_(std::move(words)), labels_(std::move(labels)) {
  if (bits_ < 1) throw InvalidArgument("code length must be >= 1");
  if (words_.size() % static_cast<std::size_t>(words_per_code_) != 0)
    throw DimensionError("packed word count is not a multiple of the code width");
  if (!labels_.empty() && static_cast<Index>(labels_.size()) != size())
    throw DimensionError("one label per code required");
  // Bits past m must be clear so popcount sees only real bits.
  if (bits_ % 64 != 0) {
    const std::uint64_t mask = ~std::uint64_t{0} << (bits_ % 64);
    for (Index i = 0; i < size(); ++i)
      if (words_[static_cast<std::size_t>((i + 1) * words_per_code_ - 1)] & mask)
        throw FormatError("code " + std::to_string(i) + " has bits set past its length");
  }
}

CodeDatabase CodeDatabase::from_bits(const CodeBits& codes, std::vector<int> labels) {
  const Index wpc = words_for(codes.cols());
  std::vector<std::uint64_t> words(static_cast<std::size_t>(codes.rows() * wpc), 0);
  for (Index i = 0; i < codes.rows(); ++i)
    for (Index j = 0; j < codes.cols(); ++j)
      if (codes(i, j) > 0) words[static_cast<std::size_t>(i * wpc + j / 64)] |= std::uint64_t{1} << (j % 64);
  return CodeDatabase(codes.cols(), std::move(words), std::move(labels));
}

PackedCode CodeDatabase::packed(Index i) const {
  PackedCode out;
  out.bits = bits_;
  out.words.assign(code(i), code(i) + words_per_code_);
  return out;
}

CodeBits CodeDatabase::to_bits() const {
  CodeBits out(size(), bits_);
  for (Index i = 0; i < size(); ++i)
    for (Index j = 0; j < bits_; ++j) out(i, j) = (code(i)[j / 64] >> (j % 64)) & 1U ? 1 : -1;
  return out;
}

void save_codes(const CodeDatabase& db, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  detail::put_magic(out, kCodesMagic);
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(db.size()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(db.bits()));
  detail::put_all<std::uint64_t>(out, db.words());
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

CodeDatabase load_codes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  detail::Reader reader(in, "code file");
  reader.expect_magic(kCodesMagic);
  const auto n = reader.get<std::uint64_t>();
  const auto m = reader.get<std::uint32_t>();
  if (m == 0) throw FormatError("code file: zero code length");
  reader.section("codes");
  const auto count = n * static_cast<std::uint64_t>(words_for(m));
  reader.check_remaining(count, sizeof(std::uint64_t));
  std::vector<std::uint64_t> words(count);
  for (auto& w : words) w = reader.get<std::uint64_t>();
  return CodeDatabase(m, std::move(words));
}

std::vector<Index> rank_by_hamming(const PackedCode& query, const CodeDatabase& db) {
  if (query.bits != db.bits()) throw DimensionError("query length does not match database code length");
  // Counting sort on distance keeps index order within a distance.
  std::vector<std::vector<Index>> buckets(static_cast<std::size_t>(db.bits()) + 1);
  for (Index i = 0; i < db.size(); ++i)
    buckets[static_cast<std::size_t>(hamming_words(query.words.data(), db.code(i), query.words.size()))].push_back(i);
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(db.size()));
  for (const auto& b : buckets) order.insert(order.end(), b.begin(), b.end());
  return order;
}

double average_precision(std::span<const std::uint8_t> relevance) {
  double sum = 0.0;
  Index hits = 0;
  for (std::size_t p = 0; p < relevance.size(); ++p) {
    if (relevance[p]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(p + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

double precision_at_radius(std::span<const int> distances, std::span<const std::uint8_t> relevant, int radius) {
  if (distances.size() != relevant.size()) throw DimensionError("precision_at_radius: size mismatch");
  Index retrieved = 0, hits = 0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] <= radius) {
      ++retrieved;
      hits += relevant[i] ? 1 : 0;
    }
  }
  return retrieved == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(retrieved);
}

EvalReport evaluate(const CodeDatabase& db, int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  const Index n = db.size();
  const Index m = db.bits();
  if (n < 2) throw InvalidArgument("evaluation needs at least two coded items");
  if (static_cast<Index>(db.labels().size()) != n) throw InvalidArgument("evaluation needs a label per code");
  const auto& labels = db.labels();
  const std::size_t radii = static_cast<std::size_t>(m) + 1;

  struct QueryResult {
    double ap = 0.0;
    Index relevant = 0;
    std::vector<double> precision, recall;
  };
  std::vector<QueryResult> results(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](Index q) {
    std::vector<std::vector<std::uint8_t>> buckets(radii);
    for (Index i = 0; i < n; ++i) {
      if (i == q) continue;
      const int d = hamming_words(db.code(q), db.code(i), static_cast<std::size_t>(db.words_per_code()));
      buckets[static_cast<std::size_t>(d)].push_back(labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(q)]);
    }
    QueryResult& res = results[static_cast<std::size_t>(q)];
    std::vector<std::uint8_t> ranked;
    ranked.reserve(static_cast<std::size_t>(n - 1));
    for (const auto& b : buckets) ranked.insert(ranked.end(), b.begin(), b.end());
    for (auto r : ranked) res.relevant += r;
    res.ap = average_precision(ranked);
    res.precision.resize(radii);
    res.recall.resize(radii);
    Index retrieved = 0, hits = 0;
    for (std::size_t r = 0; r < radii; ++r) {
      retrieved += static_cast<Index>(buckets[r].size());
      for (auto v : buckets[r]) hits += v;
      res.precision[r] = retrieved == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(retrieved);
      res.recall[r] = res.relevant == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(res.relevant);
    }
  });

  EvalReport report;
  report.queries = n;
  report.precision_at_radius.assign(radii, 0.0);
  std::vector<double> recall(radii, 0.0);
  std::vector<double> aps;
  for (const auto& res : results) {
    for (std::size_t r = 0; r < radii; ++r) report.precision_at_radius[r] += res.precision[r];
    if (res.relevant == 0) {
      ++report.excluded_queries;
      continue;
    }
    aps.push_back(res.ap);
    for (std::size_t r = 0; r < radii; ++r) recall[r] += res.recall[r];
  }
  const Index included = n - report.excluded_queries;
  for (auto& p : report.precision_at_radius) p /= static_cast<double>(n);
  if (included > 0) {
    // Sorted summation makes the mean independent of query order.
    std::sort(aps.begin(), aps.end());
    double ap_sum = 0.0;
    for (double ap : aps) ap_sum += ap;
    report.map = ap_sum / static_cast<double>(included);
    for (auto& r : recall) r /= static_cast<double>(included);
  }
  for (std::size_t r = 0; r < radii; ++r) report.pr_curve.emplace_back(recall[r], report.precision_at_radius[r]);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["map"] = report.map ? nlohmann::ordered_json(*report.map) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json par = nlohmann::ordered_json::object();
  for (std::size_t r = 0; r < report.precision_at_radius.size(); ++r) par[std::to_string(r)] = report.precision_at_radius[r];
  j["precision_at_radius"] = par;
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& [recall, precision] : report.pr_curve) curve.push_back({recall, precision});
  j["pr_curve"] = curve;
  j["queries"] = report.queries;
  j["excluded_queries"] = report.excluded_queries;
  j["seconds"] = report.seconds;
  return j.dump(2);
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << report_to_json(report) << '\n';
}

}  // namespace sih

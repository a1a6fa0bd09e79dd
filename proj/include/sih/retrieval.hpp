#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sih/common.hpp"

namespace sih {

// One packed code: bit j lives at word j / 64, position j % 64; 1 means +1.
struct PackedCode {
  std::vector<std::uint64_t> words;
  Index bits = 0;
};

PackedCode pack(const CodeVector& code);
CodeVector unpack(const PackedCode& code);

// Popcount over XOR of equal-length word arrays.
int hamming_words(const std::uint64_t* a, const std::uint64_t* b, std::size_t words);
int hamming_distance(const PackedCode& a, const PackedCode& b);

// Codes of n items, row-major packed words, plus optional class labels.
class CodeDatabase {
 public:
  CodeDatabase() = default;
  CodeDatabase(Index bits, std::vector<std::uint64_t> words, std::vector<int> labels = {});
  static CodeDatabase from_bits(const CodeBits& codes, std::vector<int> labels = {});

  Index size() const { return bits_ == 0 ? 0 : static_cast<Index>(words_.size()) / words_per_code_; }
  Index bits() const { return bits_; }
  Index words_per_code() const { return words_per_code_; }
  const std::uint64_t* code(Index i) const { return words_.data() + i * words_per_code_; }
  PackedCode packed(Index i) const;
  const std::vector<std::uint64_t>& words() const { return words_; }
  const std::vector<int>& labels() const { return labels_; }
  CodeBits to_bits() const;

 private:
  Index bits_ = 0;
  Index words_per_code_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<int> labels_;
};

// "SIHC", u64 n, u32 m, then n * ceil(m/64) u64 words, little-endian.
void save_codes(const CodeDatabase& db, const std::filesystem::path& path);
CodeDatabase load_codes(const std::filesystem::path& path);

// Database indices by ascending distance; ties by index.
std::vector<Index> rank_by_hamming(const PackedCode& query, const CodeDatabase& db);

// Mean of precision@p over relevant positions p; 0 when nothing is relevant.
double average_precision(std::span<const std::uint8_t> relevance);

// Fraction of relevant items among those within `radius`; 0 if none retrieved.
double precision_at_radius(std::span<const int> distances, std::span<const std::uint8_t> relevant, int radius);

struct EvalReport {
  std::optional<double> map;  // unset when every query had no relevant item
  std::vector<double> precision_at_radius;               // radius 0..m, mean over all queries
  std::vector<std::pair<double, double>> pr_curve;       // (recall, precision) per radius 0..m
  Index queries = 0;
  Index excluded_queries = 0;  // no relevant items; left out of mAP and recall
  double seconds = 0.0;
};

// Leave-one-out: each item queries the rest; relevance is label equality.
EvalReport evaluate(const CodeDatabase& db, int threads = 1);

std::string report_to_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::filesystem::path& path);

}  // namespace sih

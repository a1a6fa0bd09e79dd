#include "sih/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "binary_io.hpp"

namespace sih {

namespace {

constexpr std::string_view kDatasetMagic = "SIHD";
constexpr std::uint32_t kDatasetVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_int(std::string_view s, std::int32_t& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

void Dataset::validate() const {
  if (size() < 1 || dim() < 1) throw InvalidArgument("dataset must have n >= 1 and d >= 1");
  if (static_cast<Index>(labels.size()) != size())
    throw InvalidArgument("dataset has " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(size()) + " rows");
  if (!features.allFinite()) throw InvalidArgument("dataset contains non-finite feature values");
  std::vector<bool> seen(class_names.size(), false);
  for (int y : labels) {
    if (y < 0 || y >= num_classes()) throw InvalidArgument("label id " + std::to_string(y) + " out of range");
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k]) throw InvalidArgument("class '" + class_names[k] + "' has no samples");
}

Dataset make_dataset(RowMatrixXd features, std::span<const std::string> raw_labels) {
  Dataset data;
  data.features = std::move(features);
  data.labels.reserve(raw_labels.size());
  std::unordered_map<std::string, int> ids;
  for (const auto& name : raw_labels) {
    auto [it, inserted] = ids.try_emplace(name, static_cast<int>(data.class_names.size()));
    if (inserted) data.class_names.push_back(name);
    data.labels.push_back(it->second);
  }
  return data;
}

Dataset select_rows(const Dataset& data, std::span<const Index> rows) {
  RowMatrixXd features(static_cast<Index>(rows.size()), data.dim());
  std::vector<std::string> names;
  names.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    features.row(static_cast<Index>(i)) = data.features.row(rows[i]);
    names.push_back(data.class_names[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(rows[i])])]);
  }
  return make_dataset(std::move(features), names);
}

Dataset concat(const Dataset& base, const Dataset& extra) {
  if (base.dim() != extra.dim())
    throw DimensionError("cannot append " + std::to_string(extra.dim()) + "-d rows to a " +
                         std::to_string(base.dim()) + "-d dataset");
  Dataset out;
  out.features.resize(base.size() + extra.size(), base.dim());
  out.features.topRows(base.size()) = base.features;
  out.features.bottomRows(extra.size()) = extra.features;
  out.class_names = base.class_names;
  out.labels = base.labels;
  std::unordered_map<std::string, int> ids;
  for (std::size_t k = 0; k < out.class_names.size(); ++k) ids.emplace(out.class_names[k], static_cast<int>(k));
  for (int y : extra.labels) {
    const auto& name = extra.class_names[static_cast<std::size_t>(y)];
    auto [it, inserted] = ids.try_emplace(name, static_cast<int>(out.class_names.size()));
    if (inserted) out.class_names.push_back(name);
    out.labels.push_back(it->second);
  }
  return out;
}

Dataset read_csv(std::istream& in) {
  std::vector<double> values;
  std::vector<std::string> raw_labels;
  Index dim = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    std::size_t pos = view.find(',');
    if (pos == std::string_view::npos) throw ParseError(line_no, "expected label followed by features");
    raw_labels.emplace_back(trim(view.substr(0, pos)));
    if (raw_labels.back().empty()) throw ParseError(line_no, "empty label");
    Index count = 0;
    while (pos != std::string_view::npos) {
      const std::size_t next = view.find(',', pos + 1);
      std::string_view field = trim(view.substr(pos + 1, next == std::string_view::npos ? next : next - pos - 1));
      double v = 0.0;
      const auto* end = field.data() + field.size();
      auto [ptr, ec] = std::from_chars(field.data(), end, v);
      if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
        throw ParseError(line_no, "non-numeric feature value '" + std::string(field) + "'");
      values.push_back(v);
      ++count;
      pos = next;
    }
    if (dim < 0) {
      dim = count;
    } else if (count != dim) {
      throw ParseError(line_no, "expected " + std::to_string(dim) + " features, found " + std::to_string(count));
    }
  }
  if (raw_labels.empty()) throw ParseError(line_no, "empty dataset");
  const Index n = static_cast<Index>(raw_labels.size());
  RowMatrixXd features = Eigen::Map<const RowMatrixXd>(values.data(), n, dim);
  return make_dataset(std::move(features), raw_labels);
}

void write_csv(std::ostream& out, const Dataset& data) {
  out.precision(17);
  for (Index i = 0; i < data.size(); ++i) {
    out << data.class_names[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])];
    for (Index c = 0; c < data.dim(); ++c) out << ',' << data.features(i, c);
    out << '\n';
  }
}

Dataset read_binary(std::istream& in) {
  detail::Reader reader(in, "dataset file");
  reader.expect_magic(kDatasetMagic);
  const auto version = reader.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw FormatError("dataset file: unsupported version " + std::to_string(version));
  const auto n = reader.get<std::uint64_t>();
  const auto d = reader.get<std::uint32_t>();
  if (n == 0 || d == 0) throw FormatError("dataset file: empty dataset");
  reader.section("labels");
  reader.check_remaining(n, sizeof(std::int32_t));
  std::vector<std::string> raw_labels;
  raw_labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) raw_labels.push_back(std::to_string(reader.get<std::int32_t>()));
  reader.section("features");
  reader.check_remaining(n * d, sizeof(double));
  RowMatrixXd features(static_cast<Index>(n), static_cast<Index>(d));
  for (Index i = 0; i < features.rows(); ++i)
    for (Index c = 0; c < features.cols(); ++c) features(i, c) = reader.get<double>();
  return make_dataset(std::move(features), raw_labels);
}

void write_binary(std::ostream& out, const Dataset& data) {
  detail::put_magic(out, kDatasetMagic);
  detail::put<std::uint32_t>(out, kDatasetVersion);
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(data.size()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(data.dim()));
  // Integer class names are written as-is; anything else falls back to the internal id.
  for (int y : data.labels) {
    std::int32_t value = y;
    parse_int(data.class_names[static_cast<std::size_t>(y)], value);
    detail::put<std::int32_t>(out, value);
  }
  for (Index i = 0; i < data.size(); ++i)
    for (Index c = 0; c < data.dim(); ++c) detail::put<double>(out, data.features(i, c));
}

DataFormat detect_format(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string_view(magic, 4) == kDatasetMagic) return DataFormat::binary;
  return DataFormat::csv;
}

Dataset load_dataset(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  Dataset data = format == DataFormat::csv ? read_csv(in) : read_binary(in);
  data.validate();
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) { return load_dataset(path, detect_format(path)); }

void save_dataset(const Dataset& data, const std::filesystem::path& path, DataFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  if (format == DataFormat::csv)
    write_csv(out, data);
  else
    write_binary(out, data);
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

PreprocessStats fit_preprocessor(const Dataset& train) {
  if (train.size() < 1) throw InvalidArgument("cannot fit preprocessor on an empty dataset");
  return PreprocessStats{train.features.colwise().mean().transpose()};
}

Dataset generate_blobs(int num_classes, int per_class, int dim, double spread, std::uint64_t seed) {
  if (num_classes < 1 || per_class < 1 || dim < 1)
    throw InvalidArgument("generate_blobs needs num_classes, per_class and dim >= 1");
  if (!(spread >= 0.0)) throw InvalidArgument("generate_blobs needs spread >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  RowMatrixXd features(static_cast<Index>(num_classes) * per_class, dim);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(features.rows()));
  for (int k = 0; k < num_classes; ++k) {
    VectorXd center = VectorXd::Zero(dim);
    if (dim == 1) {
      center(0) = num_classes == 1 ? 0.0 : -1.0 + 2.0 * k / (num_classes - 1);
    } else {
      const double angle = 2.0 * std::numbers::pi * k / num_classes;
      center(0) = std::cos(angle);
      center(1) = std::sin(angle);
    }
    for (int p = 0; p < per_class; ++p) {
      const Index row = static_cast<Index>(k) * per_class + p;
      for (int c = 0; c < dim; ++c) features(row, c) = center(c) + spread * noise(rng);
      names.push_back(std::to_string(k));
    }
  }
  return make_dataset(std::move(features), names);
}

}  // namespace sih

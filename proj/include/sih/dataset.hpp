#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sih/common.hpp"

namespace sih {

// Labeled feature matrix. Labels are contiguous internal ids 0..K-1 assigned
// in order of first appearance; class_names maps an id back to the label as
// it appeared in the source file.
struct Dataset {
  RowMatrixXd features;  // n x d
  std::vector<int> labels;
  std::vector<std::string> class_names;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  Index num_classes() const { return static_cast<Index>(class_names.size()); }

  // Throws InvalidArgument if any invariant is broken.
  void validate() const;
};

// Builds a Dataset from raw label strings, remapping them by first appearance.
Dataset make_dataset(RowMatrixXd features, std::span<const std::string> raw_labels);

// Rows of `data` in the given order; class ids are compacted to those present.
Dataset select_rows(const Dataset& data, std::span<const Index> rows);

// Appends `extra`, matching classes by name. New names get fresh ids.
Dataset concat(const Dataset& base, const Dataset& extra);

enum class DataFormat { csv, binary };

// Guesses the format from the file's leading magic bytes.
DataFormat detect_format(const std::filesystem::path& path);

Dataset read_csv(std::istream& in);
void write_csv(std::ostream& out, const Dataset& data);

// Binary layout (little-endian): "SIHD", u32 version = 1, u64 n, u32 d,
// n x i32 labels, n*d x f64 features (row-major).
Dataset read_binary(std::istream& in);
void write_binary(std::ostream& out, const Dataset& data);

Dataset load_dataset(const std::filesystem::path& path, DataFormat format);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& data, const std::filesystem::path& path, DataFormat format);

struct PreprocessStats {
  VectorXd mean;
};

PreprocessStats fit_preprocessor(const Dataset& train);

// Centers each row on stats.mean and scales it to unit Euclidean length. A
// row equal to the mean becomes the zero vector.
template <typename Derived>
RowMatrixXd apply_preprocessor(const PreprocessStats& stats, const Eigen::MatrixBase<Derived>& features) {
  if (features.cols() != stats.mean.size())
    throw DimensionError("feature width " + std::to_string(features.cols()) +
                         " does not match preprocessor width " + std::to_string(stats.mean.size()));
  RowMatrixXd out = features.rowwise() - stats.mean.transpose();
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

// Isotropic Gaussian clusters around class means spaced evenly on the unit
// circle in the first two coordinates (on [-1, 1] when dim == 1).
Dataset generate_blobs(int num_classes, int per_class, int dim, double spread, std::uint64_t seed);

}  // namespace sih

#include "sih/model_io.hpp"

#include <fstream>

#include "binary_io.hpp"

namespace sih {

namespace {

constexpr std::string_view kModelMagic = "SIHM";
constexpr std::uint32_t kModelVersion = 1;

enum Flags : std::uint32_t { kHasState = 1, kWbCold = 2, kConverged = 4 };

void put_matrix(std::ostream& out, const MatrixXd& m) {
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) detail::put<double>(out, m(r, c));
}

MatrixXd get_matrix(detail::Reader& in, Index rows, Index cols) {
  in.check_remaining(static_cast<std::uint64_t>(rows * cols), sizeof(double));
  MatrixXd m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = in.get<double>();
  return m;
}

void write_body(std::ostream& out, const HashModel& model, std::uint32_t flags) {
  const TrainConfig& cfg = model.config;
  const Index d = model.input_dim();
  const Index r = model.anchors.size();
  const Index m = model.bits();
  const Index K = model.num_classes();
  if (model.anchors.dim() != d || model.wx.rows() != model.anchors.embed_dim() || model.wb.rows() != m + 1 ||
      static_cast<Index>(model.class_names.size()) != K)
    throw DimensionError("model fields have inconsistent dimensions");

  detail::put_magic(out, kModelMagic);
  detail::put<std::uint32_t>(out, kModelVersion);
  detail::put<std::uint32_t>(out, flags | (model.converged ? kConverged : 0U));

  // config; the thread count is deliberately absent so files do not depend on it
  detail::put<std::uint64_t>(out, cfg.seed);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.bits));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.anchors));
  detail::put<double>(out, cfg.cx);
  detail::put<double>(out, cfg.cb);
  detail::put<std::uint8_t>(out, cfg.lambda ? 1 : 0);
  detail::put<double>(out, cfg.lambda_value());
  detail::put<double>(out, cfg.gamma);
  detail::put<std::uint8_t>(out, cfg.sigma ? 1 : 0);
  detail::put<double>(out, cfg.sigma.value_or(0.0));
  detail::put<double>(out, cfg.epsilon);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.max_iter));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.max_sweeps));
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(cfg.max_planes));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.solver_max_iterations));
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(cfg.sigma_pairs));

  // dimensions
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(r));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(K));
  detail::put<double>(out, model.anchors.sigma);
  detail::put<std::uint8_t>(out, model.anchors.bias ? 1 : 0);

  detail::put_all<double>(out, model.preprocess.mean);
  detail::put_all<std::uint64_t>(out, model.anchors.indices);
  for (Index l = 0; l < r; ++l)
    for (Index c = 0; c < d; ++c) detail::put<double>(out, model.anchors.anchors(l, c));
  put_matrix(out, model.wx);
  put_matrix(out, model.wb);
  for (const auto& name : model.class_names) detail::put_string(out, name);

  detail::put<std::uint64_t>(out, model.history.size());
  for (const auto& h : model.history) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(h.iteration));
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(h.phase));
    detail::put<double>(out, h.objective);
    detail::put<double>(out, h.tolerance);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(h.changed_columns));
  }
}

}  // namespace

void write_model(std::ostream& out, const HashModel& model) { write_body(out, model, 0); }

void write_state(std::ostream& out, const TrainState& state) {
  const Dataset& data = state.data;
  if (state.codes.rows() != data.size() || state.codes.cols() != state.model.bits() ||
      data.class_names != state.model.class_names || data.dim() != state.model.input_dim())
    throw DimensionError("training state does not match its model");
  write_body(out, state.model, kHasState | (state.wb_cold ? kWbCold : 0U));
  detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(data.size()));
  detail::put_all<std::int32_t>(out, data.labels);
  for (Index i = 0; i < data.size(); ++i)
    for (Index c = 0; c < data.dim(); ++c) detail::put<double>(out, data.features(i, c));
  const CodeBits& bits = state.codes.bits();
  for (Index j = 0; j < bits.cols(); ++j)
    for (Index i = 0; i < bits.rows(); ++i) detail::put<std::int8_t>(out, bits(i, j));
}

ModelFile read_model(std::istream& in) {
  detail::Reader reader(in, "model");
  reader.expect_magic(kModelMagic);
  const auto version = reader.get<std::uint32_t>();
  if (version != kModelVersion) throw FormatError("model: unsupported version " + std::to_string(version));
  const auto flags = reader.get<std::uint32_t>();

  ModelFile file;
  HashModel& model = file.model;
  TrainConfig& cfg = model.config;
  reader.section("config");
  cfg.seed = reader.get<std::uint64_t>();
  cfg.bits = reader.get<std::uint32_t>();
  cfg.anchors = reader.get<std::uint32_t>();
  cfg.cx = reader.get<double>();
  cfg.cb = reader.get<double>();
  const bool lambda_set = reader.get<std::uint8_t>() != 0;
  const double lambda = reader.get<double>();
  if (lambda_set) cfg.lambda = lambda;
  cfg.gamma = reader.get<double>();
  const bool sigma_set = reader.get<std::uint8_t>() != 0;
  const double sigma = reader.get<double>();
  if (sigma_set) cfg.sigma = sigma;
  cfg.epsilon = reader.get<double>();
  cfg.max_iter = static_cast<int>(reader.get<std::uint32_t>());
  cfg.max_sweeps = static_cast<int>(reader.get<std::uint32_t>());
  cfg.max_planes = static_cast<Index>(reader.get<std::uint64_t>());
  cfg.solver_max_iterations = static_cast<int>(reader.get<std::uint32_t>());
  cfg.sigma_pairs = static_cast<Index>(reader.get<std::uint64_t>());

  reader.section("dimensions");
  const Index d = reader.get<std::uint32_t>();
  const Index r = reader.get<std::uint32_t>();
  const Index m = reader.get<std::uint32_t>();
  const Index K = reader.get<std::uint32_t>();
  model.anchors.sigma = reader.get<double>();
  model.anchors.bias = reader.get<std::uint8_t>() != 0;
  if (d < 1 || r < 1 || m < 1 || K < 1) throw FormatError("corrupt model: zero dimension");

  reader.section("preprocess");
  reader.check_remaining(static_cast<std::uint64_t>(d), sizeof(double));
  model.preprocess.mean.resize(d);
  for (Index c = 0; c < d; ++c) model.preprocess.mean(c) = reader.get<double>();
  reader.section("anchor indices");
  reader.check_remaining(static_cast<std::uint64_t>(r), sizeof(std::uint64_t));
  model.anchors.indices.resize(static_cast<std::size_t>(r));
  for (auto& idx : model.anchors.indices) idx = static_cast<Index>(reader.get<std::uint64_t>());
  reader.section("anchors");
  reader.check_remaining(static_cast<std::uint64_t>(r * d), sizeof(double));
  model.anchors.anchors.resize(r, d);
  for (Index l = 0; l < r; ++l)
    for (Index c = 0; c < d; ++c) model.anchors.anchors(l, c) = reader.get<double>();
  reader.section("wx");
  model.wx = get_matrix(reader, model.anchors.embed_dim(), m);
  reader.section("wb");
  model.wb = get_matrix(reader, m + 1, K);
  reader.section("classes");
  for (Index k = 0; k < K; ++k) model.class_names.push_back(reader.get_string());

  reader.section("history");
  const auto entries = reader.get<std::uint64_t>();
  reader.check_remaining(entries, 29);
  for (std::uint64_t e = 0; e < entries; ++e) {
    HistoryEntry h;
    h.iteration = static_cast<int>(reader.get<std::uint32_t>());
    const auto phase = reader.get<std::uint8_t>();
    if (phase > static_cast<std::uint8_t>(Phase::codes)) throw FormatError("corrupt model: unknown phase in history");
    h.phase = static_cast<Phase>(phase);
    h.objective = reader.get<double>();
    h.tolerance = reader.get<double>();
    h.changed_columns = static_cast<Index>(reader.get<std::uint64_t>());
    model.history.push_back(h);
  }
  model.converged = (flags & kConverged) != 0;

  if (flags & kHasState) {
    reader.section("state");
    TrainState state;
    const auto n = reader.get<std::uint64_t>();
    reader.check_remaining(n, sizeof(std::int32_t) + sizeof(double) * static_cast<std::uint64_t>(d) +
                                  static_cast<std::uint64_t>(m));
    state.data.labels.resize(n);
    for (auto& y : state.data.labels) {
      y = reader.get<std::int32_t>();
      if (y < 0 || y >= K) throw FormatError("corrupt model: state label out of range");
    }
    state.data.class_names = model.class_names;
    state.data.features.resize(static_cast<Index>(n), d);
    for (Index i = 0; i < state.data.size(); ++i)
      for (Index c = 0; c < d; ++c) state.data.features(i, c) = reader.get<double>();
    CodeBits bits(static_cast<Index>(n), m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < bits.rows(); ++i) bits(i, j) = reader.get<std::int8_t>();
    try {
      state.codes = CodeMatrix(std::move(bits));
    } catch (const InvalidArgument&) {
      throw FormatError("corrupt model: code entries outside {-1, +1}");
    }
    state.model = model;
    state.wb_cold = (flags & kWbCold) != 0;
    file.state = std::move(state);
  }
  if (!reader.at_end()) throw FormatError("corrupt model: trailing bytes after last section");
  return file;
}

void save_model(const HashModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model '" + path.string() + "'");
  write_model(out, model);
  if (!out) throw Error("write failed for model '" + path.string() + "'");
}

void save_model(const TrainState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model '" + path.string() + "'");
  write_state(out, state);
  if (!out) throw Error("write failed for model '" + path.string() + "'");
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model '" + path.string() + "'");
  return read_model(in);
}

}  // namespace sih

#include "sih/incremental.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace sih {

namespace {

constexpr std::uint64_t kFreshCodewordDraws = 64;

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

std::unordered_map<std::string, int> class_ids(const Dataset& data) {
  std::unordered_map<std::string, int> ids;
  for (std::size_t k = 0; k < data.class_names.size(); ++k) ids.emplace(data.class_names[k], static_cast<int>(k));
  return ids;
}

TrainState delete_classes(const TrainState& state, const DeleteClasses& event) {
  const auto ids = class_ids(state.data);
  std::vector<std::string> unknown;
  std::unordered_set<int> doomed;
  for (const auto& name : event.labels) {
    auto it = ids.find(name);
    if (it == ids.end())
      unknown.push_back(name);
    else
      doomed.insert(it->second);
  }
  if (!unknown.empty()) throw InvalidArgument("delete-class: unknown labels " + join(unknown));
  if (static_cast<Index>(doomed.size()) == state.data.num_classes())
    throw InvalidArgument("delete-class: cannot delete every class");

  std::vector<Index> keep;
  for (Index i = 0; i < state.data.size(); ++i)
    if (!doomed.count(state.data.labels[static_cast<std::size_t>(i)])) keep.push_back(i);

  TrainState out;
  out.data = select_rows(state.data, keep);
  CodeBits bits(static_cast<Index>(keep.size()), state.codes.cols());
  for (std::size_t r = 0; r < keep.size(); ++r) bits.row(static_cast<Index>(r)) = state.codes.bits().row(keep[r]);
  out.codes = CodeMatrix(std::move(bits));
  out.model = state.model;
  out.model.class_names = out.data.class_names;
  out.model.wb.resize(state.model.wb.rows(), out.data.num_classes());
  for (Index k = 0; k < out.data.num_classes(); ++k)
    out.model.wb.col(k) = state.model.wb.col(ids.at(out.data.class_names[static_cast<std::size_t>(k)]));
  out.wb_cold = state.wb_cold;
  out.memory.bits = state.memory.bits;
  const Index block = state.model.wb.rows();
  for (const VectorXd& p : state.memory.classes) {
    if (p.size() != block * state.data.num_classes()) continue;
    VectorXd kept(block * out.data.num_classes());
    for (Index k = 0; k < out.data.num_classes(); ++k)
      kept.segment(k * block, block) = p.segment(ids.at(out.data.class_names[static_cast<std::size_t>(k)]) * block, block);
    out.memory.classes.push_back(std::move(kept));
  }
  return out;
}

// Modal code of each class, one row per class id.
CodeBits class_codewords(const TrainState& state) {
  const Index K = state.data.num_classes();
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(K));
  for (Index i = 0; i < state.data.size(); ++i)
    members[static_cast<std::size_t>(state.data.labels[static_cast<std::size_t>(i)])].push_back(i);
  CodeBits modal(K, state.codes.cols());
  for (Index k = 0; k < K; ++k) {
    const auto& rows = members[static_cast<std::size_t>(k)];
    CodeBits block(static_cast<Index>(rows.size()), state.codes.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) block.row(static_cast<Index>(r)) = state.codes.bits().row(rows[r]);
    modal.row(k) = most_frequent_pattern(block).transpose();
  }
  return modal;
}

int min_distance(const CodeBits& existing, const CodeBits& fresh) {
  int best = static_cast<int>(fresh.cols());
  for (Index a = 0; a < fresh.rows(); ++a) {
    for (Index b = 0; b < existing.rows(); ++b)
      best = std::min(best, static_cast<int>((fresh.row(a).array() != existing.row(b).array()).count()));
    for (Index b = a + 1; b < fresh.rows(); ++b)
      best = std::min(best, static_cast<int>((fresh.row(a).array() != fresh.row(b).array()).count()));
  }
  return best;
}

// Among independent draws of sample_codewords, the one farthest (by minimum
// Hamming distance) from the existing codewords and from itself; ties keep
// the earliest draw.
CodeBits fresh_codewords(const CodeBits& existing, Index count, double gamma, std::uint64_t seed) {
  CodeBits best;
  int best_distance = -1;
  for (std::uint64_t draw = 0; draw < kFreshCodewordDraws; ++draw) {
    CodeBits words = sample_codewords(count, existing.cols(), gamma, derive_seed(seed, draw));
    const int d = min_distance(existing, words);
    if (d > best_distance) {
      best_distance = d;
      best = std::move(words);
    }
  }
  return best;
}

TrainState add_images(const TrainState& state, const AddImages& event) {
  if (event.data.size() == 0) return state;
  const auto ids = class_ids(state.data);
  std::vector<std::string> unknown;
  for (const auto& name : event.data.class_names)
    if (!ids.count(name)) unknown.push_back(name);
  if (!unknown.empty()) throw InvalidArgument("add-images: labels not in the database " + join(unknown));

  TrainState out;
  out.data = concat(state.data, event.data);
  const Index n_old = state.data.size();
  const CodeBits modal = class_codewords(state);
  CodeBits bits(out.data.size(), state.codes.cols());
  bits.topRows(n_old) = state.codes.bits();
  for (Index i = n_old; i < out.data.size(); ++i)
    bits.row(i) = modal.row(out.data.labels[static_cast<std::size_t>(i)]);
  out.codes = CodeMatrix(std::move(bits));
  out.model = state.model;
  out.wb_cold = state.wb_cold;
  out.memory = state.memory;
  return out;
}

TrainState add_classes(const TrainState& state, const AddClasses& event, std::uint64_t seed) {
  if (event.data.size() == 0) return state;
  const auto ids = class_ids(state.data);
  std::vector<std::string> clash;
  for (const auto& name : event.data.class_names)
    if (ids.count(name)) clash.push_back(name);
  if (!clash.empty()) throw InvalidArgument("add-class: labels already in the database " + join(clash));

  TrainState out;
  out.data = concat(state.data, event.data);
  const Index n_old = state.data.size();
  const Index K_old = state.data.num_classes();
  const Index K_new = out.data.num_classes() - K_old;
  const CodeBits words = fresh_codewords(class_codewords(state), K_new, 0.0, seed);
  CodeBits bits(out.data.size(), state.codes.cols());
  bits.topRows(n_old) = state.codes.bits();
  for (Index i = n_old; i < out.data.size(); ++i) bits.row(i) = words.row(out.data.labels[static_cast<std::size_t>(i)] - K_old);
  out.codes = CodeMatrix(std::move(bits));
  out.model = state.model;
  out.model.class_names = out.data.class_names;
  out.model.wb = MatrixXd::Zero(state.model.wb.rows(), out.data.num_classes());
  out.wb_cold = true;
  out.memory.bits = state.memory.bits;
  return out;
}

}  // namespace

TrainState make_state(const Dataset& data, TrainResult result) {
  TrainState state;
  state.data = data;
  state.codes = std::move(result.codes);
  state.model = std::move(result.model);
  state.memory = std::move(result.memory);
  return state;
}

CodeVector most_frequent_pattern(const CodeBits& rows) {
  if (rows.rows() < 1) throw InvalidArgument("most_frequent_pattern needs at least one row");
  std::map<std::vector<std::int8_t>, std::pair<Index, Index>> counts;  // pattern -> (count, first row)
  for (Index i = 0; i < rows.rows(); ++i) {
    std::vector<std::int8_t> key(rows.row(i).begin(), rows.row(i).end());
    auto [it, inserted] = counts.try_emplace(std::move(key), 0, i);
    ++it->second.first;
  }
  Index best_row = 0, best_count = 0;
  for (const auto& [pattern, info] : counts) {
    const auto [count, first] = info;
    if (count > best_count || (count == best_count && first < best_row)) {
      best_count = count;
      best_row = first;
    }
  }
  return rows.row(best_row).transpose();
}

TrainState apply_event(const TrainState& state, const ModificationEvent& event, std::uint64_t seed) {
  if (state.codes.rows() != state.data.size()) throw InvalidArgument("state codes and data row counts differ");
  return std::visit(
      [&](const auto& e) -> TrainState {
        using E = std::decay_t<decltype(e)>;
        if constexpr (!std::is_same_v<E, DeleteClasses>) {
          if (e.data.size() > 0 && e.data.dim() != state.data.dim())
            throw DimensionError("event data has " + std::to_string(e.data.dim()) + " features, database has " +
                                 std::to_string(state.data.dim()));
        }
        if constexpr (std::is_same_v<E, DeleteClasses>)
          return delete_classes(state, e);
        else if constexpr (std::is_same_v<E, AddImages>)
          return add_images(state, e);
        else
          return add_classes(state, e, seed);
      },
      event);
}

TrainResult incremental_train(const TrainState& state, const TrainConfig& config, const IncrementalOptions& options,
                              TrainLog log) {
  state.data.validate();
  TrainConfig cfg = config;
  cfg.bits = state.codes.cols();
  cfg.anchors = state.model.anchors.size();
  cfg.validate();

  HashModel shell;
  shell.preprocess = state.model.preprocess;
  shell.anchors = state.model.anchors;
  shell.class_names = state.data.class_names;
  if (options.refit_preprocess || options.re_anchor) shell.preprocess = fit_preprocessor(state.data);
  const RowMatrixXd X = apply_preprocessor(shell.preprocess, state.data.features);

  LoopStart start;
  start.codes = state.codes;
  start.wx = state.model.wx;
  start.wb = state.model.wb;
  start.wb_cold = state.wb_cold;
  start.memory = state.memory;
  if (options.re_anchor) {
    cfg.anchors = std::min<Index>(config.anchors, X.rows());
    shell.anchors = sample_anchors(X, cfg.anchors, derive_seed(cfg.seed, 0));
    shell.anchors.sigma =
        cfg.sigma ? *cfg.sigma : estimate_sigma(X, shell.anchors, cfg.sigma_pairs, derive_seed(cfg.seed, 1));
    start.wx = MatrixXd::Zero(shell.anchors.embed_dim(), cfg.bits);
    start.memory.bits.clear();
  }
  const MatrixXd phi = embed_rows(X, shell.anchors, cfg.threads);
  return run_alternating(std::move(shell), phi, state.data.labels, std::move(start), cfg, log);
}

std::vector<ModificationEvent> load_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open event file '" + path.string() + "'");
  const auto base = path.parent_path();
  std::vector<ModificationEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream words(line);
    std::string command, arg, extra;
    if (!(words >> command) || command.front() == '#') continue;
    if (!(words >> arg)) throw ParseError(line_no, "command '" + command + "' needs an argument");
    if (words >> extra) throw ParseError(line_no, "unexpected text after '" + arg + "'");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path file(p);
      return file.is_relative() ? base / file : file;
    };
    if (command == "add-class") {
      events.emplace_back(AddClasses{load_dataset(resolve(arg))});
    } else if (command == "add-images") {
      events.emplace_back(AddImages{load_dataset(resolve(arg))});
    } else if (command == "delete-class") {
      DeleteClasses del;
      std::stringstream list(arg);
      std::string label;
      while (std::getline(list, label, ','))
        if (!label.empty()) del.labels.push_back(label);
      if (del.labels.empty()) throw ParseError(line_no, "delete-class needs at least one label");
      events.emplace_back(std::move(del));
    } else {
      throw ParseError(line_no, "unknown command '" + command + "'");
    }
  }
  return events;
}

}  // namespace sih

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "sih/trainer.hpp"

namespace sih {

// Database modifications. Classes are matched by their original label names.
struct AddClasses {
  Dataset data;  // labels must all be new
};
struct AddImages {
  Dataset data;  // labels must all exist
};
struct DeleteClasses {
  std::vector<std::string> labels;
};
using ModificationEvent = std::variant<AddClasses, AddImages, DeleteClasses>;

// Everything needed to resume training: raw data, its codes and the model.
// Row i of `codes` belongs to row i of `data`; model.wb has one column per
// class of `data`.
struct TrainState {
  Dataset data;
  CodeMatrix codes;
  HashModel model;
  bool wb_cold = false;  // multi-class weights are retrained from zero
  SolverMemory memory;   // not stored in model files
};

TrainState make_state(const Dataset& data, TrainResult result);

// Modal row pattern; ties go to the pattern seen first.
CodeVector most_frequent_pattern(const CodeBits& rows);

// Initializes the state for the modified database without retraining.
// Anchors and preprocessing statistics are kept as they are. New classes get
// the best of several codeword draws by minimum Hamming distance to the
// existing class codewords and to each other.
TrainState apply_event(const TrainState& state, const ModificationEvent& event, std::uint64_t seed);

struct IncrementalOptions {
  bool refit_preprocess = false;
  bool re_anchor = false;  // resample anchors and sigma; bit weights restart from zero
};

// Resumes the alternating loop from the state's codes and weights, with every
// bit treated as changed on the first pass.
TrainResult incremental_train(const TrainState& state, const TrainConfig& config, const IncrementalOptions& options = {},
                              TrainLog log = {});

// Event file: one command per line, `add-class FILE`, `add-images FILE` or
// `delete-class L1[,L2...]`. Relative paths resolve against the event file's
// directory; blank lines and lines starting with '#' are skipped.
std::vector<ModificationEvent> load_events(const std::filesystem::path& path);

}  // namespace sih

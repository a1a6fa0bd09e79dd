#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "sih/incremental.hpp"
#include "sih/trainer.hpp"

namespace sih {

// Binary model file, little-endian, f64 for every real. "SIHM", u32 version,
// u32 flags, then the sections config, dimensions, preprocess, anchor
// indices, anchors, wx, wb, classes, history and, when flagged, state
// (training rows, labels and the code matrix needed for updates).
struct ModelFile {
  HashModel model;
  std::optional<TrainState> state;
};

void write_model(std::ostream& out, const HashModel& model);
void write_state(std::ostream& out, const TrainState& state);
ModelFile read_model(std::istream& in);

void save_model(const HashModel& model, const std::filesystem::path& path);
void save_model(const TrainState& state, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace sih

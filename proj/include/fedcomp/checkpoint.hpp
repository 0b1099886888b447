#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "fedcomp/model.hpp"
#include "fedcomp/orchestrator.hpp"

namespace fedcomp {

/// Resumable state after a fused round.
struct Checkpoint {
  Stage stage = Stage::compression;
  int round = 0;
  ParameterVector global;
  std::optional<SparsityMask> mask;  ///< fine-tune stage only
  ParameterVector compressed;         ///< compression-stage output (fine-tune stage only)
  std::vector<RoundRecord> records;   ///< every record so far, both stages

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Directory layout: state.json, global.bin, and optionally mask.bin, compressed.bin.
/// Files are written to temporaries and renamed into place.
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& dir);
std::optional<Checkpoint> load_checkpoint(const std::filesystem::path& dir);

}  // namespace fedcomp

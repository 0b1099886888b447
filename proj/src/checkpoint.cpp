#include "fedcomp/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "fedcomp/error.hpp"
#include "fedcomp/report.hpp"

namespace fedcomp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class WriteFn>
void write_atomic(const fs::path& target, WriteFn&& fn) {
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
    fn(out);
    if (!out) throw Error("I/O failure while writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const fs::path& dir) {
  fs::create_directories(dir);
  write_atomic(dir / "global.bin", [&](std::ostream& out) { ck.global.write(out); });
  if (ck.mask) write_atomic(dir / "mask.bin", [&](std::ostream& out) { ck.mask->write(out); });
  if (ck.compressed.size() > 0) {
    write_atomic(dir / "compressed.bin", [&](std::ostream& out) { ck.compressed.write(out); });
  }
  json state;
  state["stage"] = to_string(ck.stage);
  state["round"] = ck.round;
  state["has_mask"] = ck.mask.has_value();
  state["has_compressed"] = ck.compressed.size() > 0;
  state["records"] = json::array();
  for (const auto& r : ck.records) state["records"].push_back(to_json(r));
  // state.json goes last: its presence marks a complete checkpoint.
  write_atomic(dir / "state.json", [&](std::ostream& out) { out << state.dump(2) << "\n"; });
}

std::optional<Checkpoint> load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "state.json")) return std::nullopt;
  std::ifstream in(dir / "state.json");
  const json state = json::parse(in);
  Checkpoint ck;
  const auto stage = state.at("stage").get<std::string>();
  ck.stage = stage == "finetune" ? Stage::finetune : Stage::compression;
  ck.round = state.at("round").get<int>();
  ck.global = ParameterVector::load(dir / "global.bin");
  if (state.at("has_mask").get<bool>()) {
    std::ifstream min(dir / "mask.bin", std::ios::binary);
    if (!min) throw Error("checkpoint mask missing in '" + dir.string() + "'");
    ck.mask = SparsityMask::read(min);
  }
  if (state.at("has_compressed").get<bool>()) ck.compressed = ParameterVector::load(dir / "compressed.bin");
  for (const auto& r : state.at("records")) ck.records.push_back(round_record_from_json(r));
  return ck;
}

}  // namespace fedcomp

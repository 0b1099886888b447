#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcomp/metrics.hpp"
#include "fedcomp/model.hpp"
#include "fedcomp/orchestrator.hpp"
#include "fedcomp/synthetic.hpp"
#include "fedcomp/timeseries.hpp"

namespace fedcomp {

struct CsvSource {
  std::string path;
  char delimiter = ',';
  bool header = false;
  std::vector<std::size_t> features;  ///< column subset; empty = all columns
  friend bool operator==(const CsvSource&, const CsvSource&) = default;
};

enum class Task : std::uint8_t { imputation, anomaly };

struct TaskConfig {
  Task kind = Task::imputation;
  double missing_rate = 0.3;
  double anomaly_rate = 0.1;
  double anomaly_factor = 3.0;
  double c = 3.0;               ///< used when c_grid is empty
  std::vector<double> c_grid;   ///< tuned on the validation split when non-empty
  ThresholdScope scope = ThresholdScope::per_client;
};

struct ExperimentConfig {
  std::optional<SyntheticSpec> synthetic;
  std::optional<CsvSource> csv;
  std::string scheme = "univariate";
  int clients = 5;  ///< multivariate scheme only
  int window = 50;
  LayerSpec layers{{64, 32, 32, 64}};
  RoundSchedule schedule;
  CompressionSettings compression;
  ProximalConfig training;
  TaskConfig task;
  SplitRatios split;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 0;  ///< 0 = OpenMP default
  /// Also run the same schedule with lambda = 0 and report it alongside.
  bool compare_uncompressed = false;
};

/// Every violation found, each naming its field path.
std::vector<std::string> validate(const ExperimentConfig& cfg);

/// Parses and validates. Unknown keys, type errors and range violations are all
/// collected and thrown together as a ValidationError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// Full echo, including defaults. parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& cfg);

const char* to_string(Task t);
const char* to_string(ThresholdScope s);
const char* to_string(LambdaSchedule s);

}  // namespace fedcomp

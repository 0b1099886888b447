#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedcomp/metrics.hpp"
#include "fedcomp/orchestrator.hpp"

namespace fedcomp {

/// Outcome of one trained pipeline (the compressed run, or the lambda = 0 baseline).
struct VariantResult {
  std::string name;
  double lambda = 0.0;
  std::vector<RoundRecord> rounds;
  bool finetune_ran = false;
  Eigen::Index parameters = 0;
  Eigen::Index nonzeros = 0;
  double compression_rate = 0.0;
  std::optional<DetectionMetrics> detection;
  std::optional<double> sensitivity;  ///< chosen c
  std::optional<double> rmse;         ///< physical units, missing test cells

  friend bool operator==(const VariantResult&, const VariantResult&) = default;
};

struct Timings {
  double data_seconds = 0.0;
  double compression_seconds = 0.0;
  double finetune_seconds = 0.0;
  double evaluation_seconds = 0.0;
  double total_seconds = 0.0;
  friend bool operator==(const Timings&, const Timings&) = default;
};

struct ExperimentReport {
  nlohmann::json config;
  std::string task;
  std::string scheme;
  int n_clients = 0;
  Eigen::Index input_dim = 0;
  std::string metric_convention = "per-point";
  VariantResult compressed;
  std::optional<VariantResult> baseline;
  Timings timings;

  friend bool operator==(const ExperimentReport&, const ExperimentReport&) = default;
};

nlohmann::json to_json(const RoundRecord& r);
RoundRecord round_record_from_json(const nlohmann::json& j);

/// Deterministic content only; timings are kept separately.
nlohmann::json to_json(const ExperimentReport& r);
nlohmann::json timings_to_json(const Timings& t);
ExperimentReport report_from_json(const nlohmann::json& report, const nlohmann::json& timings);

/// Header plus one row per round of one variant.
std::string rounds_csv(const VariantResult& v);
/// Plain-text table: one row per variant with Recall, Prec, Acc or RMSE, No. Para.
/// and Compress. rate columns.
std::string summary_table(const ExperimentReport& r);

struct ReportFiles {
  std::filesystem::path report_json;
  std::filesystem::path rounds_csv;
  std::filesystem::path baseline_rounds_csv;  ///< empty when no baseline
  std::filesystem::path summary_txt;
  std::filesystem::path timings_json;
};

/// Writes report.json, rounds.csv (and rounds_baseline.csv), summary.txt and
/// timings.json. Everything except timings.json is byte-deterministic.
ReportFiles emit_report(const ExperimentReport& r, const std::filesystem::path& dir);
ExperimentReport load_report(const std::filesystem::path& dir);

}  // namespace fedcomp

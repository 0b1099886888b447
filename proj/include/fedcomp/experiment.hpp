#pragma once

#include <filesystem>
#include <functional>

#include "fedcomp/config.hpp"
#include "fedcomp/error.hpp"
#include "fedcomp/report.hpp"

namespace fedcomp {

/// Corrupted series and the clients built from it, before any training.
struct PreparedData {
  TimeSeries series;  ///< physical units, with obs_mask / anomaly_labels set
  std::vector<ClientDataset> clients;
};

TimeSeries load_dataset(const ExperimentConfig& cfg);
PreparedData prepare_data(const ExperimentConfig& cfg);

FederationTopology make_topology(const ExperimentConfig& cfg, std::vector<ClientDataset> clients);

/// Evaluates a global model on the test split of every client and fills the task
/// metrics of `out` (rmse, or detection + sensitivity).
void evaluate_model(const ExperimentConfig& cfg, const TimeSeries& series, const FederationTopology& topology,
                    const ParameterVector& global, VariantResult& out);

/// Raised when RunOptions::stop_after_rounds cuts a run short.
class Interrupted : public Error {
 public:
  using Error::Error;
};

struct RunOptions {
  bool checkpoint = true;  ///< write a checkpoint under output_dir after every round
  bool resume = false;     ///< continue from an existing checkpoint
  /// Stops after this many rounds in total (both stages) when > 0; used to simulate
  /// interruption.
  int stop_after_rounds = 0;
  /// Save the final global models as output_dir/model.bin (and model_baseline.bin).
  bool save_models = true;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

}  // namespace fedcomp

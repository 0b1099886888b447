#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedcomp/model.hpp"
#include "fedcomp/timeseries.hpp"

namespace fedcomp {

/// Moments of training reconstruction errors. `std` is the square root of the
/// unbiased sample variance.
struct ErrorStats {
  double mean = 0.0;
  double std = 0.0;
  Eigen::Index count = 0;
};

struct Threshold {
  ErrorStats stats;
  double value = 0.0;  ///< E = mean + c * std
};

enum class ThresholdScope : std::uint8_t { per_client, global };

Threshold calibrate_threshold(std::span<const double> train_errors, double c);
inline double threshold_value(const ErrorStats& s, double c) { return s.mean + c * s.std; }

/// Stride-1 overlap accumulation: every cell of the segment receives the average of
/// the window outputs covering it. Returns an M x len matrix in standardized units.
Matrix cell_reconstruction(const ParameterVector& model, const Segment& seg);

/// Squared reconstruction error per cell, averaged over the covering windows. Cells
/// that are not observed get 0.
Matrix cell_errors(const ParameterVector& model, const Segment& seg);

/// Labels true where cell_errors exceeds E.
BoolMatrix score_points(const ParameterVector& model, const Segment& seg, double E);

/// Precision and recall are defined as 1 when their denominator is 0.
struct DetectionMetrics {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  double precision() const { return tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0; }
  double recall() const { return tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0; }
  double accuracy() const {
    const auto total = tp + fp + tn + fn;
    return total > 0 ? static_cast<double>(tp + tn) / static_cast<double>(total) : 1.0;
  }
  DetectionMetrics& operator+=(const DetectionMetrics& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const DetectionMetrics&, const DetectionMetrics&) = default;
};

DetectionMetrics detection_metrics(const BoolMatrix& predicted, const BoolMatrix& truth);

/// RMSE over cells where `obs_mask` is false. Both matrices in physical units.
double imputation_rmse(const Matrix& truth, const Matrix& reconstructed, const BoolMatrix& obs_mask);
/// Same, taking the ground truth and missing pattern from a series.
double imputation_rmse(const TimeSeries& truth, const Matrix& reconstructed);

/// Per-client errors used to choose the sensitivity multiplier c.
struct SensitivityInputs {
  ErrorStats train;              ///< statistics of the threshold pool for this client
  Matrix validation_errors;      ///< cell errors on the validation split
  BoolMatrix validation_truth;   ///< anomaly labels on the validation split
};

/// Returns the first c of `grid` maximizing pooled validation accuracy.
double select_sensitivity(std::span<const double> grid, std::span<const SensitivityInputs> clients);

}  // namespace fedcomp

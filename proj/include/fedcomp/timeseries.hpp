#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fedcomp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Multivariate measurements: D features (rows) by T time steps (columns).
///
/// `values` always holds the ground truth, including at cells flagged missing in
/// `obs_mask`. When anomalies have been injected, `values` holds the corrupted series
/// and `clean_values` the series before injection; otherwise `clean_values` is empty.
struct TimeSeries {
  Matrix values;
  std::vector<std::string> feature_names;
  BoolMatrix obs_mask;
  BoolMatrix anomaly_labels;
  Matrix clean_values;

  /// All-observed, anomaly-free series. Names default to "f0".."f{D-1}".
  static TimeSeries from_values(Matrix values, std::vector<std::string> names = {});

  Eigen::Index features() const { return values.rows(); }
  Eigen::Index steps() const { return values.cols(); }
  bool has_clean_values() const { return clean_values.size() != 0; }

  /// Throws DimensionError when the member matrices disagree in shape.
  void validate() const;

  /// Rows `feature_idx`, columns [t_begin, t_end).
  TimeSeries slice(const std::vector<std::size_t>& feature_idx, Eigen::Index t_begin, Eigen::Index t_end) const;
};

/// Per-feature z-score parameters estimated on a training prefix.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;

  double forward(std::size_t feature, double x) const { return (x - mean[feature]) / std[feature]; }
  double inverse(std::size_t feature, double z) const { return z * std[feature] + mean[feature]; }
};

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

const char* to_string(Split s);

/// Fractions of each client's local time range assigned to train/validation/test,
/// in that temporal order.
struct SplitRatios {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

/// Stride-1 sliding windows. Column q is the column-major vectorization of the
/// M x w block of local columns [q, q + w - 1], so entry (feature m, lag t) sits at
/// row t * M + m.
struct WindowSet {
  Matrix windows;
  BoolMatrix masks;

  Eigen::Index count() const { return windows.cols(); }
  Eigen::Index length() const { return windows.rows(); }
};

/// One contiguous split of a client's local series, standardized, with missing cells
/// replaced by zero (the standardized mean).
struct Segment {
  Split split = Split::train;
  Eigen::Index t_begin = 0;  ///< global time index of the first column
  Matrix values;             ///< M x len, standardized
  BoolMatrix obs_mask;       ///< M x len
  WindowSet windows;

  Eigen::Index length() const { return values.cols(); }
};

/// Everything one simulated edge device holds locally.
struct ClientDataset {
  int client_id = 0;
  std::vector<std::size_t> features;  ///< global feature indices owned
  Eigen::Index t_begin = 0;           ///< global time range [t_begin, t_end)
  Eigen::Index t_end = 0;
  Eigen::Index window = 0;
  NormalizationStats stats;
  std::array<Segment, 3> segments;

  const Segment& segment(Split s) const { return segments[static_cast<std::size_t>(s)]; }
  Eigen::Index input_dim() const { return static_cast<Eigen::Index>(features.size()) * window; }
  /// Total windows over all splits.
  Eigen::Index window_count() const;
};

struct PartitionScheme {
  enum class Kind : std::uint8_t { centralized, multivariate, univariate };
  Kind kind = Kind::univariate;
  int n_clients = 1;  ///< used by `multivariate` only

  static PartitionScheme centralized() { return {Kind::centralized, 1}; }
  static PartitionScheme multivariate(int n) { return {Kind::multivariate, n}; }
  static PartitionScheme univariate() { return {Kind::univariate, 0}; }

  /// Accepts "centralized", "multivariate", "univariate".
  static PartitionScheme parse(const std::string& name, int n_clients);
  std::string name() const;
};

struct CsvOptions {
  char delimiter = ',';
  bool header = false;
};

/// Rows are time steps, columns are features.
TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& opts = {});
void write_csv(const TimeSeries& ts, const std::filesystem::path& path, const CsvOptions& opts = {});

/// Z-scores every feature with mean/std of the observed cells in the first
/// `train_fraction` of the time steps. `clean_values` is transformed alongside.
std::pair<TimeSeries, NormalizationStats> standardize(const TimeSeries& ts, double train_fraction);

WindowSet make_windows(const Matrix& local_series, const BoolMatrix& obs_mask, Eigen::Index w);

/// Marks each cell missing independently with probability p.
TimeSeries inject_mcar(const TimeSeries& ts, double p, std::uint64_t seed);

/// Per feature, overwrites ceil(rate * T) cells chosen without replacement with
/// factor * max(feature).
TimeSeries inject_anomalies(const TimeSeries& ts, double rate, double factor, std::uint64_t seed);

/// Splits `ts` into client datasets. Each client's local series is standardized on
/// its own training split, cut into contiguous train/validation/test segments and
/// windowed per segment.
std::vector<ClientDataset> partition(const TimeSeries& ts, const PartitionScheme& scheme, Eigen::Index w,
                                     const SplitRatios& ratios = {});

/// Local time ranges of the three splits for a local series of `length` steps.
std::array<std::pair<Eigen::Index, Eigen::Index>, 3> split_ranges(Eigen::Index length, const SplitRatios& ratios);

}  // namespace fedcomp

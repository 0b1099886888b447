#include "fedcomp/metrics.hpp"

#include <cmath>

#include "fedcomp/error.hpp"

namespace fedcomp {

namespace {

// Adds `per_window` (input_dim x Q) back onto the M x len grid and divides by the
// number of covering windows.
Matrix overlap_average(const Matrix& per_window, Eigen::Index m, Eigen::Index len, Eigen::Index w) {
  Matrix acc = Matrix::Zero(m, len);
  Vector cover = Vector::Zero(len);
  for (Eigen::Index q = 0; q < per_window.cols(); ++q) {
    for (Eigen::Index lag = 0; lag < w; ++lag) {
      acc.col(q + lag) += per_window.col(q).segment(lag * m, m);
      cover[q + lag] += 1.0;
    }
  }
  for (Eigen::Index t = 0; t < len; ++t) acc.col(t) /= cover[t];
  return acc;
}

Eigen::Index window_of(const Segment& seg) {
  const auto m = seg.values.rows();
  if (m == 0) throw DimensionError("segment has no features");
  return seg.windows.length() / m;
}

}  // namespace

Threshold calibrate_threshold(std::span<const double> train_errors, double c) {
  if (train_errors.size() < 2) throw Error("threshold calibration needs at least 2 error samples");
  double sum = 0.0;
  for (double e : train_errors) sum += e;
  const double n = static_cast<double>(train_errors.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (double e : train_errors) ss += (e - mean) * (e - mean);
  Threshold t;
  t.stats = {mean, std::sqrt(ss / (n - 1.0)), static_cast<Eigen::Index>(train_errors.size())};
  t.value = threshold_value(t.stats, c);
  return t;
}

Matrix cell_reconstruction(const ParameterVector& model, const Segment& seg) {
  const auto w = window_of(seg);
  if (seg.windows.length() != model.input_dim()) throw DimensionError("model input does not match window length");
  const Matrix out = forward_batch(model, seg.windows.windows);
  return overlap_average(out, seg.values.rows(), seg.length(), w);
}

Matrix cell_errors(const ParameterVector& model, const Segment& seg) {
  const auto w = window_of(seg);
  if (seg.windows.length() != model.input_dim()) throw DimensionError("model input does not match window length");
  const Matrix out = forward_batch(model, seg.windows.windows);
  const Matrix sq = (out - seg.windows.windows).array().square().matrix();
  Matrix err = overlap_average(sq, seg.values.rows(), seg.length(), w);
  return seg.obs_mask.select(err, 0.0);
}

BoolMatrix score_points(const ParameterVector& model, const Segment& seg, double E) {
  return cell_errors(model, seg).array() > E;
}

DetectionMetrics detection_metrics(const BoolMatrix& predicted, const BoolMatrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw DimensionError("predicted and true labels differ in shape");
  }
  DetectionMetrics m;
  m.tp = (predicted && truth).count();
  m.fp = (predicted && !truth).count();
  m.fn = (!predicted && truth).count();
  m.tn = (!predicted && !truth).count();
  return m;
}

double imputation_rmse(const Matrix& truth, const Matrix& reconstructed, const BoolMatrix& obs_mask) {
  if (truth.rows() != reconstructed.rows() || truth.cols() != reconstructed.cols() ||
      obs_mask.rows() != truth.rows() || obs_mask.cols() != truth.cols()) {
    throw DimensionError("imputation_rmse shape mismatch");
  }
  double ss = 0.0;
  Eigen::Index n = 0;
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
      if (obs_mask(i, j)) continue;
      const double r = reconstructed(i, j) - truth(i, j);
      ss += r * r;
      ++n;
    }
  }
  if (n == 0) throw Error("imputation_rmse: no missing cells");
  return std::sqrt(ss / static_cast<double>(n));
}

double imputation_rmse(const TimeSeries& truth, const Matrix& reconstructed) {
  return imputation_rmse(truth.values, reconstructed, truth.obs_mask);
}

double select_sensitivity(std::span<const double> grid, std::span<const SensitivityInputs> clients) {
  if (grid.empty()) throw Error("sensitivity grid is empty");
  double best_c = grid.front();
  double best_acc = -1.0;
  for (double c : grid) {
    DetectionMetrics pooled;
    for (const auto& cl : clients) {
      const double e = threshold_value(cl.train, c);
      pooled += detection_metrics(cl.validation_errors.array() > e, cl.validation_truth);
    }
    if (pooled.accuracy() > best_acc) {
      best_acc = pooled.accuracy();
      best_c = c;
    }
  }
  return best_c;
}

}  // namespace fedcomp

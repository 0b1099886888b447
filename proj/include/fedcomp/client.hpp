#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "fedcomp/metrics.hpp"
#include "fedcomp/model.hpp"
#include "fedcomp/timeseries.hpp"

namespace fedcomp {

/// A simulated edge device. The dataset is private: the rest of the system only sees
/// trained models, scalar losses, and per-cell outputs for evaluation.
class Client {
 public:
  explicit Client(ClientDataset data) : data_(std::move(data)) {}
  Client(Client&& other) noexcept : data_(std::move(other.data_)), accesses_(other.accesses_.load()) {}
  Client& operator=(Client&&) = delete;
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  int id() const { return data_.client_id; }
  Eigen::Index input_dim() const { return data_.input_dim(); }
  const std::vector<std::size_t>& features() const { return data_.features; }
  /// Global time range [begin, end) of a split.
  std::pair<Eigen::Index, Eigen::Index> split_range(Split s) const;

  /// Starts from `global` and minimizes the proximal objective around it.
  TrainResult train(const ParameterVector& global, const ProximalConfig& cfg, const SparsityMask* grad_mask,
                    std::uint64_t seed) const;

  /// Mean masked loss of `model` over the windows of a split.
  double evaluate_loss(const ParameterVector& model, Split s) const;
  Matrix cell_errors(const ParameterVector& model, Split s) const;
  /// Reconstruction in physical units (overlap-averaged, de-standardized).
  Matrix reconstruct(const ParameterVector& model, Split s) const;

  /// Number of times the private dataset has been read.
  std::size_t data_accesses() const { return accesses_.load(); }

 private:
  const Segment& touch(Split s) const {
    accesses_.fetch_add(1, std::memory_order_relaxed);
    return data_.segment(s);
  }

  ClientDataset data_;
  mutable std::atomic<std::size_t> accesses_{0};
};

}  // namespace fedcomp

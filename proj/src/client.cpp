#include "fedcomp/client.hpp"

#include "fedcomp/error.hpp"

namespace fedcomp {

std::pair<Eigen::Index, Eigen::Index> Client::split_range(Split s) const {
  const auto& seg = data_.segment(s);
  return {seg.t_begin, seg.t_begin + seg.length()};
}

TrainResult Client::train(const ParameterVector& global, const ProximalConfig& cfg, const SparsityMask* grad_mask,
                          std::uint64_t seed) const {
  const auto& seg = touch(Split::train);
  return local_train(global, seg.windows, global, cfg, grad_mask, seed);
}

double Client::evaluate_loss(const ParameterVector& model, Split s) const {
  const auto& seg = touch(s);
  return objective(model, seg.windows.windows, seg.windows.masks, ProximalTerm{});
}

Matrix Client::cell_errors(const ParameterVector& model, Split s) const {
  return fedcomp::cell_errors(model, touch(s));
}

Matrix Client::reconstruct(const ParameterVector& model, Split s) const {
  Matrix rec = cell_reconstruction(model, touch(s));
  for (Eigen::Index r = 0; r < rec.rows(); ++r) {
    const auto f = static_cast<std::size_t>(r);
    rec.row(r) = rec.row(r).array() * data_.stats.std[f] + data_.stats.mean[f];
  }
  return rec;
}

}  // namespace fedcomp

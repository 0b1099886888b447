#pragma once

#include <span>
#include <vector>

#include "fedcomp/model.hpp"

namespace fedcomp {

/// soft(x, tau) = sign(x) * max(|x| - tau, 0). Returns an exact 0.0 inside [-tau, tau].
inline double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

struct FusionConfig {
  double lambda = 0.0;   ///< L1 weight
  double penalty = 1.0;  ///< ADMM penalty b
  int max_iters = 500;
  double tol = 1e-8;

  /// Throws ValidationError listing every out-of-range field.
  void validate() const;
};

/// Solver iterates for the L1 consensus problem. `u` is the scaled dual.
struct AdmmState {
  Vector theta;
  Vector z;
  Vector u;
  int k = 0;
};

struct AdmmResidual {
  double primal = 0.0;  ///< ||z - theta||_inf
  double dual = 0.0;    ///< b * ||z_k - z_{k-1}||_inf
};

struct AdmmResult {
  ParameterVector model;  ///< the z iterate (exactly sparse)
  int iterations = 0;
  bool converged = false;
  std::vector<AdmmResidual> residuals;  ///< one entry per iteration
  AdmmState state;
};

/// Coordinate-wise mean.
ParameterVector average_fuse(std::span<const ParameterVector> models);

/// Exact minimizer of 1/2 sum_i ||theta - theta_i||^2 + lambda ||theta||_1:
/// soft(mean, lambda / N) per coordinate.
ParameterVector closed_form_sparse_fuse(std::span<const ParameterVector> models, double lambda);

/// Scaled-dual ADMM on the same objective:
///   theta = (sum_i theta_i + b (z + u)) / (N + b)
///   z     = soft(theta - u, lambda / b)
///   u     = u + z - theta
/// until max(||z - theta||_inf, b ||z_k - z_{k-1}||_inf) <= tol or max_iters.
AdmmResult admm_sparse_fuse(std::span<const ParameterVector> models, const FusionConfig& cfg);

/// Objective 1/2 sum_i ||theta - theta_i||^2 + lambda ||theta||_1 at `theta`.
double sparse_fusion_objective(std::span<const ParameterVector> models, const Vector& theta, double lambda);

/// True where |coordinate| > zero_tol.
SparsityMask extract_mask(const ParameterVector& model, double zero_tol = 0.0);

/// Mean on the mask's support, exact zero elsewhere.
ParameterVector masked_average_fuse(std::span<const ParameterVector> models, const SparsityMask& mask);

/// Fraction of coordinates with |value| <= zero_tol.
double compression_rate(const ParameterVector& model, double zero_tol = 0.0);
Eigen::Index nonzero_count(const ParameterVector& model, double zero_tol = 0.0);

/// Smallest lambda for which the fused model is identically zero: N * max |mean|.
double full_shrinkage_lambda(std::span<const ParameterVector> models);

}  // namespace fedcomp

#include "fedcomp/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedcomp/error.hpp"

namespace fedcomp {

namespace {

void check_models(std::span<const ParameterVector> models) {
  if (models.empty()) throw Error("fusion needs at least one model");
  for (const auto& m : models.subspan(1)) {
    if (!m.same_shape(models.front())) throw DimensionError("fused models differ in shape");
  }
}

// Coordinate-wise sum in model order, so the result does not depend on the thread count.
Vector coordinate_sum(std::span<const ParameterVector> models) {
  const auto dim = models.front().size();
  const auto n = static_cast<std::ptrdiff_t>(models.size());
  Vector sum(dim);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < dim; ++j) {
    double s = 0.0;
    for (std::ptrdiff_t i = 0; i < n; ++i) s += models[static_cast<std::size_t>(i)].flat()[j];
    sum[j] = s;
  }
  return sum;
}

}  // namespace

void FusionConfig::validate() const {
  std::vector<std::string> v;
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) v.push_back("fusion.lambda must be a finite value >= 0");
  if (!(penalty > 0.0) || !std::isfinite(penalty)) v.push_back("fusion.penalty must be > 0");
  if (max_iters < 1) v.push_back("fusion.max_iters must be >= 1");
  if (!(tol > 0.0)) v.push_back("fusion.tol must be > 0");
  if (!v.empty()) throw ValidationError(std::move(v));
}

ParameterVector average_fuse(std::span<const ParameterVector> models) {
  check_models(models);
  Vector mean = coordinate_sum(models);
  mean /= static_cast<double>(models.size());
  return models.front().with_flat(std::move(mean));
}

ParameterVector closed_form_sparse_fuse(std::span<const ParameterVector> models, double lambda) {
  check_models(models);
  if (!(lambda >= 0.0)) throw Error("lambda must be nonnegative");
  Vector out = coordinate_sum(models);
  const double n = static_cast<double>(models.size());
  const double tau = lambda / n;
  const auto dim = out.size();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < dim; ++j) out[j] = soft_threshold(out[j] / n, tau);
  return models.front().with_flat(std::move(out));
}

AdmmResult admm_sparse_fuse(std::span<const ParameterVector> models, const FusionConfig& cfg) {
  check_models(models);
  cfg.validate();
  const Vector sum = coordinate_sum(models);
  const auto dim = sum.size();
  const double n = static_cast<double>(models.size());
  const double b = cfg.penalty;
  const double tau = cfg.lambda / b;
  const double denom = n + b;

  AdmmResult res;
  AdmmState& st = res.state;
  st.theta = Vector::Zero(dim);
  st.z = Vector::Zero(dim);
  st.u = Vector::Zero(dim);
  res.residuals.reserve(static_cast<std::size_t>(std::min(cfg.max_iters, 4096)));

  double* theta = st.theta.data();
  double* z = st.z.data();
  double* u = st.u.data();
  const double* s = sum.data();
  while (st.k < cfg.max_iters) {
    double primal = 0.0;
    double dual = 0.0;
#pragma omp parallel for schedule(static) reduction(max : primal, dual)
    for (Eigen::Index j = 0; j < dim; ++j) {
      const double th = (s[j] + b * (z[j] + u[j])) / denom;
      const double zn = soft_threshold(th - u[j], tau);
      u[j] += zn - th;
      primal = std::max(primal, std::abs(zn - th));
      dual = std::max(dual, std::abs(zn - z[j]));
      theta[j] = th;
      z[j] = zn;
    }
    ++st.k;
    res.residuals.push_back({primal, b * dual});
    if (std::max(primal, b * dual) <= cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = st.k;
  res.model = models.front().with_flat(st.z);
  return res;
}

double sparse_fusion_objective(std::span<const ParameterVector> models, const Vector& theta, double lambda) {
  check_models(models);
  if (theta.size() != models.front().size()) throw DimensionError("theta length differs from models");
  double total = 0.0;
  for (const auto& m : models) total += 0.5 * (theta - m.flat()).squaredNorm();
  return total + lambda * theta.lpNorm<1>();
}

SparsityMask extract_mask(const ParameterVector& model, double zero_tol) {
  if (!(zero_tol >= 0.0)) throw Error("zero_tol must be nonnegative");
  return SparsityMask(model.flat().array().abs() > zero_tol);
}

ParameterVector masked_average_fuse(std::span<const ParameterVector> models, const SparsityMask& mask) {
  check_models(models);
  if (mask.size() != models.front().size()) throw DimensionError("mask length differs from models");
  Vector out = coordinate_sum(models);
  const double n = static_cast<double>(models.size());
  const auto dim = out.size();
  const auto& bits = mask.bits();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < dim; ++j) out[j] = bits[j] ? out[j] / n : 0.0;
  return models.front().with_flat(std::move(out));
}

Eigen::Index nonzero_count(const ParameterVector& model, double zero_tol) {
  return (model.flat().array().abs() > zero_tol).count();
}

double compression_rate(const ParameterVector& model, double zero_tol) {
  if (model.size() == 0) return 0.0;
  return static_cast<double>(model.size() - nonzero_count(model, zero_tol)) / static_cast<double>(model.size());
}

double full_shrinkage_lambda(std::span<const ParameterVector> models) {
  const auto mean = average_fuse(models);
  return static_cast<double>(models.size()) * mean.flat().cwiseAbs().maxCoeff();
}

}  // namespace fedcomp

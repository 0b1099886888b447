#include "fedcomp/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedcomp::reference {

namespace {

double soft(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

Vec sum(const std::vector<Vec>& models) {
  if (models.empty()) throw std::invalid_argument("no models");
  Vec s(models.front().size(), 0.0);
  for (const auto& m : models) {
    if (m.size() != s.size()) throw std::invalid_argument("length mismatch");
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += m[j];
  }
  return s;
}

}  // namespace

Vec average(const std::vector<Vec>& models) {
  Vec s = sum(models);
  for (auto& v : s) v /= static_cast<double>(models.size());
  return s;
}

Vec soft_threshold_mean(const std::vector<Vec>& models, double lambda) {
  Vec s = average(models);
  const double tau = lambda / static_cast<double>(models.size());
  for (auto& v : s) v = soft(v, tau);
  return s;
}

Vec masked_average(const std::vector<Vec>& models, const std::vector<bool>& mask) {
  Vec s = average(models);
  if (mask.size() != s.size()) throw std::invalid_argument("mask length mismatch");
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (!mask[j]) s[j] = 0.0;
  }
  return s;
}

AdmmOutcome admm(const std::vector<Vec>& models, double lambda, double penalty, int max_iters, double tol) {
  const Vec s = sum(models);
  const double n = static_cast<double>(models.size());
  const std::size_t dim = s.size();
  Vec theta(dim, 0.0), z(dim, 0.0), u(dim, 0.0);
  AdmmOutcome out;
  for (int k = 0; k < max_iters; ++k) {
    double primal = 0.0;
    double dual = 0.0;
    for (std::size_t j = 0; j < dim; ++j) theta[j] = (s[j] + penalty * (z[j] + u[j])) / (n + penalty);
    for (std::size_t j = 0; j < dim; ++j) {
      const double zn = soft(theta[j] - u[j], lambda / penalty);
      dual = std::max(dual, std::abs(zn - z[j]));
      z[j] = zn;
    }
    for (std::size_t j = 0; j < dim; ++j) {
      u[j] += z[j] - theta[j];
      primal = std::max(primal, std::abs(z[j] - theta[j]));
    }
    out.iterations = k + 1;
    if (std::max(primal, penalty * dual) <= tol) {
      out.converged = true;
      break;
    }
  }
  out.z = std::move(z);
  return out;
}

Vec forward(const std::vector<Layer>& layers, const Vec& x) {
  Vec a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (a.size() != L.cols) throw std::invalid_argument("dimension mismatch");
    Vec next(L.rows, 0.0);
    for (std::size_t r = 0; r < L.rows; ++r) {
      double acc = L.bias[r];
      for (std::size_t c = 0; c < L.cols; ++c) acc += L.weight[r * L.cols + c] * a[c];
      next[r] = (l + 1 < layers.size()) ? std::max(acc, 0.0) : acc;
    }
    a = std::move(next);
  }
  return a;
}

}  // namespace fedcomp::reference

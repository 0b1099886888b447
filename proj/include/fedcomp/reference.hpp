#pragma once

// Plain serial loops over std::vector, with no Eigen and no OpenMP. Kept as a
// cross-check for the parallel kernels in tests and as the baseline in the benchmark.

#include <cstddef>
#include <vector>

namespace fedcomp::reference {

using Vec = std::vector<double>;

Vec average(const std::vector<Vec>& models);
Vec soft_threshold_mean(const std::vector<Vec>& models, double lambda);
Vec masked_average(const std::vector<Vec>& models, const std::vector<bool>& mask);

struct AdmmOutcome {
  Vec z;
  int iterations = 0;
  bool converged = false;
};
AdmmOutcome admm(const std::vector<Vec>& models, double lambda, double penalty, int max_iters, double tol);

/// Dense autoencoder given as per-layer row-major weights and biases.
struct Layer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec weight;  // row-major rows x cols
  Vec bias;
};
Vec forward(const std::vector<Layer>& layers, const Vec& x);

}  // namespace fedcomp::reference

// Times the OpenMP kernels against the serial reference implementations.
//
//   fedcomp_bench [--clients N] [--dim D] [--reps R] [--threads T]

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "fedcomp/fusion.hpp"
#include "fedcomp/reference.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  return best;
}

void row(const char* name, double ref_ms, double par_ms) {
  std::printf("%-22s %12.3f %12.3f %9.2fx\n", name, ref_ms, par_ms, ref_ms / par_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedcomp kernel benchmark"};
  int clients = 24;
  long dim = 329264;
  int reps = 5;
  int threads = 0;
  double lambda_per_client = 0.01;
  app.add_option("--clients", clients, "Number of client models")->check(CLI::PositiveNumber);
  app.add_option("--dim", dim, "Coordinates per model")->check(CLI::PositiveNumber);
  app.add_option("--reps", reps, "Repetitions (best time is reported)")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);
  app.add_option("--lambda-per-client", lambda_per_client, "lambda / N for the sparse fusion kernels");
  CLI11_PARSE(app, argc, argv);
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
  const int used = omp_get_max_threads();
#else
  const int used = 1;
#endif

  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd(0.0, 0.05);
  std::vector<fedcomp::ParameterVector> models;
  std::vector<fedcomp::reference::Vec> ref_models;
  for (int i = 0; i < clients; ++i) {
    fedcomp::Vector v(dim);
    for (auto& x : v) x = nd(gen);
    models.emplace_back(std::vector<fedcomp::LayerShape>{{1, dim - 1}}, v);
    ref_models.emplace_back(v.data(), v.data() + v.size());
  }
  const double lambda = lambda_per_client * clients;
  fedcomp::FusionConfig cfg;
  cfg.lambda = lambda;

  const auto cf = fedcomp::closed_form_sparse_fuse(models, lambda);
  const auto mask = fedcomp::extract_mask(cf);
  std::vector<bool> ref_mask(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) ref_mask[static_cast<std::size_t>(i)] = mask[i];

  std::printf("clients %d, dim %ld, threads %d, lambda %.4g\n", clients, dim, used, lambda);
  std::printf("%-22s %12s %12s %10s\n", "kernel", "serial ms", "openmp ms", "speedup");
  row("average", best_ms(reps, [&] { fedcomp::reference::average(ref_models); }),
      best_ms(reps, [&] { fedcomp::average_fuse(models); }));
  row("closed-form sparse", best_ms(reps, [&] { fedcomp::reference::soft_threshold_mean(ref_models, lambda); }),
      best_ms(reps, [&] { fedcomp::closed_form_sparse_fuse(models, lambda); }));
  row("masked average", best_ms(reps, [&] { fedcomp::reference::masked_average(ref_models, ref_mask); }),
      best_ms(reps, [&] { fedcomp::masked_average_fuse(models, mask); }));

  int ref_iters = 0, par_iters = 0;
  const double ref_admm = best_ms(reps, [&] {
    ref_iters = fedcomp::reference::admm(ref_models, lambda, cfg.penalty, cfg.max_iters, cfg.tol).iterations;
  });
  const double par_admm = best_ms(reps, [&] { par_iters = fedcomp::admm_sparse_fuse(models, cfg).iterations; });
  row("admm", ref_admm, par_admm);
  std::printf("admm iterations: serial %d, openmp %d; compression rate %.4f\n", ref_iters, par_iters,
              fedcomp::compression_rate(cf));
  return 0;
}

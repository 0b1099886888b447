// fedcomp: federated autoencoder training with L1 compression fusion.
//
//   fedcomp run  --config exp.json [--seed N] [--out DIR] [--threads N] [--resume]
//   fedcomp fuse --models a.bin b.bin ... --rule admm --lambda 0.1 --out fused.bin
//   fedcomp eval --config exp.json --model global.bin [--out DIR]
//   fedcomp gen  --config exp.json --out data.csv [--header]
//
// Exit codes: 0 success, 1 validation error, 2 runtime error.

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fedcomp/experiment.hpp"
#include "fedcomp/fusion.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

constexpr int kValidationExit = 1;
constexpr int kRuntimeExit = 2;

fedcomp::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                                      std::optional<std::string> out, std::optional<int> threads) {
  auto cfg = fedcomp::parse_config_file(path);
  if (seed) cfg.seed = *seed;
  if (out) cfg.output_dir = *out;
  if (threads) cfg.threads = *threads;
  if (auto v = fedcomp::validate(cfg); !v.empty()) throw fedcomp::ValidationError(std::move(v));
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
  return cfg;
}

void print_variant(const fedcomp::VariantResult& v) {
  std::cout << v.name << ": nonzeros " << v.nonzeros << " / " << v.parameters << ", compression rate "
            << v.compression_rate;
  if (v.rmse) std::cout << ", RMSE " << *v.rmse;
  if (v.detection) {
    std::cout << ", precision " << v.detection->precision() << ", recall " << v.detection->recall() << ", accuracy "
              << v.detection->accuracy();
  }
  if (v.sensitivity) std::cout << ", c " << *v.sensitivity;
  std::cout << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated autoencoder training with L1 compression fusion"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  bool resume = false;

  auto* run = app.add_subcommand("run", "Run a full experiment and write its report");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");
  run->add_option("--threads", threads, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);
  run->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");

  std::vector<std::string> model_paths;
  std::string rule = "admm";
  fedcomp::FusionConfig fusion;
  std::string fuse_out;
  std::string mask_from;
  auto* fuse = app.add_subcommand("fuse", "Fuse saved models");
  fuse->add_option("--models", model_paths, "Model files")->required()->expected(1, -1);
  fuse->add_option("--rule", rule, "admm | closed-form | average | masked")
      ->check(CLI::IsMember({"admm", "closed-form", "average", "masked"}));
  fuse->add_option("--lambda", fusion.lambda, "L1 weight")->check(CLI::NonNegativeNumber);
  fuse->add_option("--penalty", fusion.penalty, "ADMM penalty b")->check(CLI::PositiveNumber);
  fuse->add_option("--max-iters", fusion.max_iters, "ADMM iteration cap")->check(CLI::PositiveNumber);
  fuse->add_option("--tol", fusion.tol, "ADMM residual tolerance")->check(CLI::PositiveNumber);
  fuse->add_option("--mask-from", mask_from, "Model whose nonzero support gates the masked rule");
  fuse->add_option("--out", fuse_out, "Output model file")->required();
  fuse->add_option("--threads", threads, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);

  std::string model_path;
  auto* eval = app.add_subcommand("eval", "Evaluate a saved global model on the configured data");
  eval->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  eval->add_option("--model", model_path, "Global model file")->required()->check(CLI::ExistingFile);
  eval->add_option("--seed", seed, "Override the config seed");
  eval->add_option("--out", out_dir, "Write eval.json into this directory");
  eval->add_option("--threads", threads, "OpenMP threads (0 = default)")->check(CLI::NonNegativeNumber);

  std::string csv_out;
  bool header = false;
  auto* gen = app.add_subcommand("gen", "Write the configured synthetic dataset as CSV");
  gen->add_option("--config", config_path, "Experiment config with dataset.synthetic")->required()->check(CLI::ExistingFile);
  gen->add_option("--seed", seed, "Override the synthetic generator seed");
  gen->add_option("--out", csv_out, "CSV output path")->required();
  gen->add_flag("--header", header, "Write a header row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }

  try {
    if (*run) {
      auto cfg = load_config(config_path, seed, out_dir, threads);
      fedcomp::RunOptions opts;
      opts.resume = resume;
      auto report = fedcomp::run_experiment(cfg, opts);
      fedcomp::emit_report(report, cfg.output_dir);
      if (report.baseline) print_variant(*report.baseline);
      print_variant(report.compressed);
      std::cout << "report written to " << cfg.output_dir << "\n";
    } else if (*fuse) {
#ifdef _OPENMP
      if (threads && *threads > 0) omp_set_num_threads(*threads);
#endif
      fusion.validate();
      std::vector<fedcomp::ParameterVector> models;
      for (const auto& p : model_paths) models.push_back(fedcomp::ParameterVector::load(p));
      fedcomp::ParameterVector fused;
      if (rule == "admm") {
        auto res = fedcomp::admm_sparse_fuse(models, fusion);
        std::cout << "ADMM " << (res.converged ? "converged" : "did NOT converge") << " after " << res.iterations
                  << " iterations (primal " << res.residuals.back().primal << ", dual " << res.residuals.back().dual
                  << ")\n";
        fused = std::move(res.model);
      } else if (rule == "closed-form") {
        fused = fedcomp::closed_form_sparse_fuse(models, fusion.lambda);
      } else if (rule == "average") {
        fused = fedcomp::average_fuse(models);
      } else {
        if (mask_from.empty()) throw fedcomp::ValidationError({"--mask-from is required for the masked rule"});
        fused = fedcomp::masked_average_fuse(models,
                                             fedcomp::extract_mask(fedcomp::ParameterVector::load(mask_from)));
      }
      fused.save(fuse_out);
      std::cout << "nonzeros " << fedcomp::nonzero_count(fused) << " / " << fused.size() << ", compression rate "
                << fedcomp::compression_rate(fused) << "\n";
    } else if (*eval) {
      auto cfg = load_config(config_path, seed, out_dir, threads);
      auto data = fedcomp::prepare_data(cfg);
      const auto topology = fedcomp::make_topology(cfg, std::move(data.clients));
      const auto model = fedcomp::ParameterVector::load(model_path);
      fedcomp::VariantResult v;
      v.name = "eval";
      v.parameters = model.size();
      v.nonzeros = fedcomp::nonzero_count(model, cfg.compression.zero_tol);
      v.compression_rate = fedcomp::compression_rate(model, cfg.compression.zero_tol);
      fedcomp::evaluate_model(cfg, data.series, topology, model, v);
      print_variant(v);
      if (out_dir) {
        fedcomp::ExperimentReport r;
        r.config = fedcomp::to_json(cfg);
        r.task = fedcomp::to_string(cfg.task.kind);
        r.scheme = cfg.scheme;
        r.n_clients = static_cast<int>(topology.clients.size());
        r.input_dim = topology.input_dim();
        r.compressed = v;
        std::filesystem::create_directories(*out_dir);
        std::ofstream(std::filesystem::path(*out_dir) / "eval.json") << fedcomp::to_json(r).dump(2) << "\n";
      }
    } else if (*gen) {
      auto cfg = fedcomp::parse_config_file(config_path);
      if (!cfg.synthetic) throw fedcomp::ValidationError({"dataset.synthetic is required for gen"});
      if (seed) cfg.synthetic->seed = *seed;
      const auto ts = fedcomp::generate_synthetic(*cfg.synthetic);
      fedcomp::write_csv(ts, csv_out, fedcomp::CsvOptions{',', header});
      std::cout << "wrote " << ts.features() << " features x " << ts.steps() << " steps to " << csv_out << "\n";
    }
  } catch (const fedcomp::ValidationError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
    return kValidationExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return 0;
}

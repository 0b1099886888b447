#include "fedcomp/experiment.hpp"

#include <chrono>
#include <cmath>
#include <exception>

#include "fedcomp/checkpoint.hpp"
#include "fedcomp/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedcomp {

namespace fs = std::filesystem;

namespace {

enum SeedTag : std::uint64_t { kMcarTag = 1, kAnomalyTag = 2, kInitTag = 3, kTrainTag = 4 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> flatten(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

void evaluate_imputation(const TimeSeries& series, const FederationTopology& topology, const ParameterVector& global,
                         VariantResult& out) {
  const auto n = static_cast<std::ptrdiff_t>(topology.clients.size());
  std::vector<double> ss(static_cast<std::size_t>(n), 0.0);
  std::vector<Eigen::Index> count(static_cast<std::size_t>(n), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& client = topology.clients[static_cast<std::size_t>(i)];
    const auto [b, e] = client.split_range(Split::test);
    const auto truth = series.slice(client.features(), b, e);
    const Matrix rec = client.reconstruct(global, Split::test);
    double s = 0.0;
    Eigen::Index c = 0;
    for (Eigen::Index t = 0; t < rec.cols(); ++t) {
      for (Eigen::Index f = 0; f < rec.rows(); ++f) {
        if (truth.obs_mask(f, t)) continue;
        const double r = rec(f, t) - truth.values(f, t);
        s += r * r;
        ++c;
      }
    }
    ss[static_cast<std::size_t>(i)] = s;
    count[static_cast<std::size_t>(i)] = c;
  }
  double total = 0.0;
  Eigen::Index cells = 0;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    total += ss[i];
    cells += count[i];
  }
  if (cells > 0) out.rmse = std::sqrt(total / static_cast<double>(cells));
}

void evaluate_anomaly(const ExperimentConfig& cfg, const TimeSeries& series, const FederationTopology& topology,
                      const ParameterVector& global, VariantResult& out) {
  const auto n = topology.clients.size();
  std::vector<std::vector<double>> train_err(n);
  std::vector<SensitivityInputs> inputs(n);
  std::vector<Matrix> test_err(n);
  std::vector<BoolMatrix> test_truth(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto& client = topology.clients[i];
    train_err[i] = flatten(client.cell_errors(global, Split::train));
    inputs[i].validation_errors = client.cell_errors(global, Split::validation);
    const auto [vb, ve] = client.split_range(Split::validation);
    inputs[i].validation_truth = series.slice(client.features(), vb, ve).anomaly_labels;
    test_err[i] = client.cell_errors(global, Split::test);
    const auto [tb, te] = client.split_range(Split::test);
    test_truth[i] = series.slice(client.features(), tb, te).anomaly_labels;
  }

  if (cfg.task.scope == ThresholdScope::global) {
    std::vector<double> pooled;
    for (const auto& e : train_err) pooled.insert(pooled.end(), e.begin(), e.end());
    const auto stats = calibrate_threshold(pooled, 0.0).stats;
    for (auto& in : inputs) in.train = stats;
  } else {
    for (std::size_t i = 0; i < n; ++i) inputs[i].train = calibrate_threshold(train_err[i], 0.0).stats;
  }

  const double c = cfg.task.c_grid.empty() ? cfg.task.c : select_sensitivity(cfg.task.c_grid, inputs);
  DetectionMetrics pooled;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = threshold_value(inputs[i].train, c);
    pooled += detection_metrics(test_err[i].array() > e, test_truth[i]);
  }
  out.sensitivity = c;
  out.detection = pooled;
}

struct VariantOutcome {
  VariantResult result;
  ParameterVector global;
  double compression_seconds = 0.0;
  double finetune_seconds = 0.0;
};

VariantOutcome run_variant(const ExperimentConfig& cfg, const FederationTopology& topology, double lambda,
                           const std::string& name, const RunOptions& opts, int& rounds_done) {
  const fs::path ck_dir = fs::path(cfg.output_dir) / "checkpoints" / name;
  std::optional<Checkpoint> resumed;
  if (opts.resume) resumed = load_checkpoint(ck_dir);
  if (!resumed && opts.checkpoint) fs::remove_all(ck_dir);

  CompressionSettings settings = cfg.compression;
  settings.fusion.lambda = lambda;
  const std::uint64_t train_seed = derive_seed(cfg.seed, {kTrainTag});

  Checkpoint ck;
  if (resumed) ck = *resumed;
  std::vector<RoundRecord> records = ck.records;

  auto hook = [&](Stage stage, const ParameterVector* compressed) {
    return [&, stage, compressed](const RoundRecord& rec, const ParameterVector& global, const SparsityMask* mask) {
      records.push_back(rec);
      if (opts.checkpoint) {
        Checkpoint c;
        c.stage = stage;
        c.round = rec.round;
        c.global = global;
        if (mask) c.mask = *mask;
        if (compressed) c.compressed = *compressed;
        c.records = records;
        save_checkpoint(c, ck_dir);
      }
      ++rounds_done;
      if (opts.stop_after_rounds > 0 && rounds_done >= opts.stop_after_rounds) {
        throw Interrupted("stopped after " + std::to_string(rounds_done) + " rounds");
      }
    };
  };

  VariantOutcome out;
  ParameterVector compressed;
  auto t0 = Clock::now();
  if (resumed && resumed->stage == Stage::finetune) {
    compressed = resumed->compressed;
  } else {
    StageOptions so;
    so.start_round = resumed ? resumed->round : 0;
    const ParameterVector initial =
        resumed ? resumed->global : init_model(topology.input_dim(), cfg.layers, derive_seed(cfg.seed, {kInitTag}));
    so.on_round_end = hook(Stage::compression, nullptr);
    compressed = run_compression_stage(topology, cfg.schedule, settings, initial, train_seed, so).global;
  }
  out.compression_seconds = seconds_since(t0);

  ParameterVector global = compressed;
  const double rate = compression_rate(compressed, settings.zero_tol);
  out.result.finetune_ran = rate >= cfg.schedule.compression_rate_target;
  t0 = Clock::now();
  if (out.result.finetune_ran && cfg.schedule.finetune_rounds > 0) {
    StageOptions so;
    SparsityMask saved_mask;
    if (resumed && resumed->stage == Stage::finetune) {
      so.start_round = resumed->round;
      global = resumed->global;
      saved_mask = resumed->mask.value();
      so.finetune_mask = &saved_mask;
    }
    so.on_round_end = hook(Stage::finetune, &compressed);
    // The mask comes from the compressed model even when resuming from a later global.
    if (!so.finetune_mask) {
      saved_mask = extract_mask(compressed, settings.zero_tol);
      so.finetune_mask = &saved_mask;
    }
    global = run_finetune_stage(topology, global, cfg.schedule, settings.zero_tol, train_seed, so).global;
  }
  out.finetune_seconds = seconds_since(t0);

  out.result.name = name;
  out.result.lambda = lambda;
  out.result.rounds = std::move(records);
  out.result.parameters = global.size();
  out.result.nonzeros = nonzero_count(global, settings.zero_tol);
  out.result.compression_rate = compression_rate(global, settings.zero_tol);
  out.global = std::move(global);
  return out;
}

}  // namespace

TimeSeries load_dataset(const ExperimentConfig& cfg) {
  if (cfg.synthetic) return generate_synthetic(*cfg.synthetic);
  if (!cfg.csv) throw Error("no dataset source configured");
  auto ts = load_csv(cfg.csv->path, CsvOptions{cfg.csv->delimiter, cfg.csv->header});
  if (!cfg.csv->features.empty()) ts = ts.slice(cfg.csv->features, 0, ts.steps());
  return ts;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  if (auto v = validate(cfg); !v.empty()) throw ValidationError(std::move(v));
  PreparedData d;
  d.series = load_dataset(cfg);
  if (d.series.steps() < cfg.window) throw Error("dataset is shorter than the window");
  if (cfg.task.kind == Task::imputation) {
    d.series = inject_mcar(d.series, cfg.task.missing_rate, derive_seed(cfg.seed, {kMcarTag}));
  } else {
    d.series = inject_anomalies(d.series, cfg.task.anomaly_rate, cfg.task.anomaly_factor,
                                derive_seed(cfg.seed, {kAnomalyTag}));
  }
  d.clients = partition(d.series, PartitionScheme::parse(cfg.scheme, cfg.clients), cfg.window, cfg.split);
  return d;
}

FederationTopology make_topology(const ExperimentConfig& cfg, std::vector<ClientDataset> clients) {
  FederationTopology topo;
  topo.scheme = cfg.scheme;
  for (auto& c : clients) topo.clients.emplace_back(std::move(c));
  topo.client_cfg.assign(topo.clients.size(), cfg.training);
  topo.validate();
  return topo;
}

void evaluate_model(const ExperimentConfig& cfg, const TimeSeries& series, const FederationTopology& topology,
                    const ParameterVector& global, VariantResult& out) {
  if (cfg.task.kind == Task::imputation) {
    evaluate_imputation(series, topology, global, out);
  } else {
    evaluate_anomaly(cfg, series, topology, global, out);
  }
}

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
  const auto t_start = Clock::now();
  ExperimentReport report;
  report.config = to_json(cfg);
  report.task = to_string(cfg.task.kind);
  report.scheme = cfg.scheme;

  auto t0 = Clock::now();
  PreparedData data = prepare_data(cfg);
  const auto topology = make_topology(cfg, std::move(data.clients));
  report.n_clients = static_cast<int>(topology.clients.size());
  report.input_dim = topology.input_dim();
  report.timings.data_seconds = seconds_since(t0);

  int rounds_done = 0;
  auto run = [&](double lambda, const std::string& name) {
    auto v = run_variant(cfg, topology, lambda, name, opts, rounds_done);
    report.timings.compression_seconds += v.compression_seconds;
    report.timings.finetune_seconds += v.finetune_seconds;
    const auto te = Clock::now();
    evaluate_model(cfg, data.series, topology, v.global, v.result);
    report.timings.evaluation_seconds += seconds_since(te);
    if (opts.save_models) {
      fs::create_directories(cfg.output_dir);
      v.global.save(fs::path(cfg.output_dir) / (name == "baseline" ? "model_baseline.bin" : "model.bin"));
    }
    return std::move(v.result);
  };

  if (cfg.compare_uncompressed) report.baseline = run(0.0, "baseline");
  report.compressed = run(cfg.compression.fusion.lambda, "compressed");
  report.timings.total_seconds = seconds_since(t_start);
  return report;
}

}  // namespace fedcomp

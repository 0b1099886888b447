#include "fedcomp/orchestrator.hpp"

#include <algorithm>
#include <exception>
#include <memory>
#include <string>

#include "fedcomp/error.hpp"
#include "fedcomp/rng.hpp"

namespace fedcomp {

void FederationTopology::validate() const {
  if (clients.empty()) throw Error("federation has no clients");
  if (client_cfg.size() != clients.size()) throw Error("one ProximalConfig per client is required");
  for (const auto& c : clients) {
    if (c.input_dim() != clients.front().input_dim()) {
      throw Error("clients disagree on model input width (" + std::to_string(c.input_dim()) + " vs " +
                  std::to_string(clients.front().input_dim()) + ")");
    }
  }
}

std::uint64_t client_seed(std::uint64_t seed, int client_id, Stage stage, int round) {
  return derive_seed(seed, {static_cast<std::uint64_t>(client_id), static_cast<std::uint64_t>(stage),
                            static_cast<std::uint64_t>(round)});
}

namespace {

struct Fused {
  ParameterVector model;
  int iterations = 0;
  bool converged = true;
};

template <class FuseFn>
StageResult run_rounds(const FederationTopology& topology, Stage stage, int rounds, const ParameterVector& start,
                       std::uint64_t seed, const SparsityMask* mask, double zero_tol, const StageOptions& options,
                       FuseFn&& fuse) {
  topology.validate();
  if (start.input_dim() != topology.input_dim()) throw DimensionError("global model does not fit client windows");

  InProcessTransport local_transport;
  Transport& transport = options.transport ? *options.transport : local_transport;

  StageResult result{start, {}};
  const auto n = static_cast<std::ptrdiff_t>(topology.clients.size());
  for (int r = options.start_round + 1; r <= rounds; ++r) {
    transport.broadcast({r, stage, kServerId, std::make_shared<const ParameterVector>(result.global), 0.0});

    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      try {
        const auto& client = topology.clients[idx];
        const ModelMessage global = transport.fetch_global(static_cast<int>(i));
        auto trained = client.train(*global.model, topology.client_cfg[idx], mask,
                                    client_seed(seed, client.id(), stage, r));
        transport.upload({global.round, global.stage, static_cast<int>(i),
                          std::make_shared<const ParameterVector>(std::move(trained.model)), trained.last_epoch_loss});
      } catch (...) {
        errors[idx] = std::current_exception();
      }
    }
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (!errors[i]) continue;
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw Error("client " + std::to_string(topology.clients[i].id()) + " failed in " + to_string(stage) +
                    " round " + std::to_string(r) + ": " + e.what());
      }
    }

    const auto uploads = transport.gather(r, stage, static_cast<std::size_t>(n));
    std::vector<ParameterVector> models;
    models.reserve(uploads.size());
    RoundRecord rec;
    rec.round = r;
    rec.stage = stage;
    for (const auto& m : uploads) {
      models.push_back(*m.model);
      rec.client_loss.push_back(m.loss);
    }

    Fused fused = fuse(models, r);
    result.global = std::move(fused.model);
    rec.fusion_iterations = fused.iterations;
    rec.fusion_converged = fused.converged;
    rec.nonzeros = nonzero_count(result.global, zero_tol);
    rec.compression_rate = compression_rate(result.global, zero_tol);

    std::vector<double> val(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      val[static_cast<std::size_t>(i)] =
          topology.clients[static_cast<std::size_t>(i)].evaluate_loss(result.global, Split::validation);
    }
    double sum = 0.0;
    for (double v : val) sum += v;
    rec.validation_loss = sum / static_cast<double>(n);

    result.records.push_back(rec);
    if (options.on_round_end) options.on_round_end(rec, result.global, mask);
  }
  return result;
}

}  // namespace

double scheduled_lambda(const CompressionSettings& settings, int round, int total_rounds) {
  if (settings.schedule == LambdaSchedule::constant) return settings.fusion.lambda;
  const int ramp = settings.ramp_rounds > 0 ? settings.ramp_rounds : total_rounds;
  return settings.fusion.lambda * static_cast<double>(std::min(round, ramp)) / static_cast<double>(ramp);
}

StageResult run_compression_stage(const FederationTopology& topology, const RoundSchedule& schedule,
                                  const CompressionSettings& settings, const ParameterVector& initial_global,
                                  std::uint64_t seed, const StageOptions& options) {
  if (schedule.compression_rounds < 1) throw Error("compression stage needs at least one round");
  settings.fusion.validate();
  const int m_total = schedule.compression_rounds;
  return run_rounds(topology, Stage::compression, m_total, initial_global, seed, nullptr, settings.zero_tol, options,
                    [&](const std::vector<ParameterVector>& models, int r) {
                      FusionConfig cfg = settings.fusion;
                      cfg.lambda = scheduled_lambda(settings, r, m_total);
                      auto res = admm_sparse_fuse(models, cfg);
                      return Fused{std::move(res.model), res.iterations, res.converged};
                    });
}

StageResult run_finetune_stage(const FederationTopology& topology, const ParameterVector& global,
                               const RoundSchedule& schedule, double zero_tol, std::uint64_t seed,
                               const StageOptions& options) {
  if (schedule.finetune_rounds < 0) throw Error("finetune_rounds must be nonnegative");
  const SparsityMask mask = options.finetune_mask ? *options.finetune_mask : extract_mask(global, zero_tol);
  if (mask.size() != global.size()) throw DimensionError("fine-tune mask length differs from model");
  return run_rounds(topology, Stage::finetune, schedule.finetune_rounds, global, seed, &mask, zero_tol, options,
                    [&](const std::vector<ParameterVector>& models, int) {
                      return Fused{masked_average_fuse(models, mask), 0, true};
                    });
}

}  // namespace fedcomp

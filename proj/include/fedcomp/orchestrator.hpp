#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedcomp/client.hpp"
#include "fedcomp/fusion.hpp"
#include "fedcomp/transport.hpp"

namespace fedcomp {

struct RoundSchedule {
  int compression_rounds = 30;  ///< M
  int finetune_rounds = 10;     ///< J
  /// The fine-tuning stage runs only if the compressed model reaches this rate.
  double compression_rate_target = 0.0;
};

enum class LambdaSchedule : std::uint8_t { constant, ramp };

struct CompressionSettings {
  FusionConfig fusion;
  LambdaSchedule schedule = LambdaSchedule::constant;
  /// ramp: lambda * min(m, R) / R with R = ramp_rounds, or M when ramp_rounds is 0.
  int ramp_rounds = 0;
  double zero_tol = 0.0;
};

struct FederationTopology {
  std::vector<Client> clients;
  std::string scheme;
  std::vector<ProximalConfig> client_cfg;  ///< one per client

  /// Throws if empty, if client configs are missing or if input widths differ.
  void validate() const;
  Eigen::Index input_dim() const { return clients.front().input_dim(); }
};

struct RoundRecord {
  int round = 0;  ///< 1-based within its stage
  Stage stage = Stage::compression;
  double compression_rate = 0.0;
  Eigen::Index nonzeros = 0;
  std::vector<double> client_loss;  ///< final-epoch training objective per client
  double validation_loss = 0.0;     ///< mean over clients of the global model's validation loss
  int fusion_iterations = 0;        ///< ADMM iterations (0 for averaging)
  bool fusion_converged = true;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct StageOptions {
  int start_round = 0;  ///< rounds already completed (resume)
  /// Called after every fused round with the new global model and, in the fine-tune
  /// stage, the mask in force.
  std::function<void(const RoundRecord&, const ParameterVector&, const SparsityMask*)> on_round_end;
  Transport* transport = nullptr;  ///< defaults to a private InProcessTransport
  const SparsityMask* finetune_mask = nullptr;  ///< resume: mask saved in the checkpoint
};

struct StageResult {
  ParameterVector global;
  std::vector<RoundRecord> records;
};

/// Seed for a client's local training in a given round.
std::uint64_t client_seed(std::uint64_t seed, int client_id, Stage stage, int round);

/// Lambda in force at (1-based) compression round `round`.
double scheduled_lambda(const CompressionSettings& settings, int round, int total_rounds);

/// M rounds of proximal local training followed by ADMM compression fusion.
StageResult run_compression_stage(const FederationTopology& topology, const RoundSchedule& schedule,
                                  const CompressionSettings& settings, const ParameterVector& initial_global,
                                  std::uint64_t seed, const StageOptions& options = {});

/// J rounds of masked local training followed by masked averaging. The mask is the
/// support of `global` at `zero_tol`.
StageResult run_finetune_stage(const FederationTopology& topology, const ParameterVector& global,
                               const RoundSchedule& schedule, double zero_tol, std::uint64_t seed,
                               const StageOptions& options = {});

}  // namespace fedcomp

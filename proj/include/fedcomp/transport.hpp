#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "fedcomp/model.hpp"

namespace fedcomp {

enum class Stage : std::uint8_t { compression, finetune };
const char* to_string(Stage s);

inline constexpr int kServerId = -1;

/// Round-tagged model snapshot. The payload is immutable once sent.
struct ModelMessage {
  int round = 0;
  Stage stage = Stage::compression;
  int sender = kServerId;
  std::shared_ptr<const ParameterVector> model;
  double loss = 0.0;
};

/// Server <-> client model exchange. Implementations must be safe for concurrent
/// `fetch_global`/`upload` calls from client threads.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual void broadcast(ModelMessage msg) = 0;
  virtual ModelMessage fetch_global(int client_id) = 0;
  virtual void upload(ModelMessage msg) = 0;
  /// Blocks until `expected` uploads tagged (round, stage) have arrived; returns them
  /// ordered by sender. Throws if an upload carries a different tag.
  virtual std::vector<ModelMessage> gather(int round, Stage stage, std::size_t expected) = 0;
};

class InProcessTransport final : public Transport {
 public:
  void broadcast(ModelMessage msg) override;
  ModelMessage fetch_global(int client_id) override;
  void upload(ModelMessage msg) override;
  std::vector<ModelMessage> gather(int round, Stage stage, std::size_t expected) override;

  std::size_t broadcasts() const;
  std::size_t uploads() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<ModelMessage> global_;
  std::vector<ModelMessage> inbox_;
  std::size_t broadcasts_ = 0;
  std::size_t uploads_ = 0;
};

}  // namespace fedcomp

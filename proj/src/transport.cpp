#include "fedcomp/transport.hpp"

#include <algorithm>
#include <string>

#include "fedcomp/error.hpp"

namespace fedcomp {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::compression: return "compression";
    case Stage::finetune: return "finetune";
  }
  return "?";
}

void InProcessTransport::broadcast(ModelMessage msg) {
  std::lock_guard lock(mu_);
  global_ = std::move(msg);
  ++broadcasts_;
}

ModelMessage InProcessTransport::fetch_global(int /*client_id*/) {
  std::lock_guard lock(mu_);
  if (!global_) throw Error("no global model has been broadcast");
  return *global_;
}

void InProcessTransport::upload(ModelMessage msg) {
  {
    std::lock_guard lock(mu_);
    inbox_.push_back(std::move(msg));
    ++uploads_;
  }
  cv_.notify_all();
}

std::vector<ModelMessage> InProcessTransport::gather(int round, Stage stage, std::size_t expected) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return inbox_.size() >= expected; });
  std::vector<ModelMessage> out;
  out.swap(inbox_);
  lock.unlock();

  if (out.size() != expected) {
    throw Error("barrier received " + std::to_string(out.size()) + " models, expected " + std::to_string(expected));
  }
  for (const auto& m : out) {
    if (m.round != round || m.stage != stage) {
      throw Error("model from client " + std::to_string(m.sender) + " is tagged " + to_string(m.stage) + " round " +
                  std::to_string(m.round) + ", expected " + to_string(stage) + " round " + std::to_string(round));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sender < b.sender; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].sender == out[i - 1].sender) {
      throw Error("duplicate upload from client " + std::to_string(out[i].sender));
    }
  }
  return out;
}

std::size_t InProcessTransport::broadcasts() const {
  std::lock_guard lock(mu_);
  return broadcasts_;
}

std::size_t InProcessTransport::uploads() const {
  std::lock_guard lock(mu_);
  return uploads_;
}

}  // namespace fedcomp

#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "donning/harness.h"

namespace donning {

// Wire format: each message is a 4-byte big-endian length followed by that
// many bytes of UTF-8 JSON. Numbers are written in shortest round-trip
// decimal form, so doubles arrive bit-identical.
inline constexpr std::uint32_t kMaxMessageBytes = 64u << 20;

// Handles one request against a connection's environment. Exposed for
// in-process testing; `env` is created lazily by "reset".
nlohmann::json HandleRequest(const ExperimentConfig& config,
                             std::shared_ptr<const EnvConfig>& env_config,
                             std::unique_ptr<DressingEnv>& env, const nlohmann::json& request,
                             bool& close);

class EnvServer {
 public:
  // Port 0 picks a free port. Throws Error when the socket cannot be bound.
  EnvServer(ExperimentConfig config, int port, const std::string& host = "127.0.0.1");
  ~EnvServer();
  EnvServer(const EnvServer&) = delete;
  EnvServer& operator=(const EnvServer&) = delete;

  int port() const { return port_; }
  // Accepts connections until Stop() or *stop_flag becomes true, then
  // drains open connections for up to `drain_seconds` before closing them.
  void Run(const std::atomic<bool>* stop_flag = nullptr, double drain_seconds = 30.0);
  void Stop() { stop_ = true; }

 private:
  void Serve(int fd);

  ExperimentConfig config_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stop_{false};
  std::atomic<bool> force_close_{false};
  std::mutex mutex_;
  std::vector<std::thread> workers_;
  std::atomic<int> active_{0};
};

class EnvClient {
 public:
  EnvClient(const std::string& host, int port);
  ~EnvClient();
  EnvClient(const EnvClient&) = delete;
  EnvClient& operator=(const EnvClient&) = delete;

  nlohmann::json Request(const nlohmann::json& message);
  // Sends raw bytes as one framed message (for malformed-input tests).
  nlohmann::json RequestRaw(const std::string& payload);

 private:
  int fd_ = -1;
};

}  // namespace donning

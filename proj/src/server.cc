#include "donning/server.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "donning/errors.h"

namespace donning {

namespace {

using nlohmann::json;

json ErrorReply(const std::string& what) { return {{"error", what}}; }

enum class ReadStatus { kOk, kClosed, kAborted };

// Reads exactly n bytes, polling so a forced shutdown can interrupt.
ReadStatus ReadExact(int fd, char* buf, std::size_t n, const std::atomic<bool>* abort) {
  std::size_t got = 0;
  while (got < n) {
    if (abort && *abort) return ReadStatus::kAborted;
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, abort ? 100 : -1);
    if (ready < 0) {
      if (errno == EINTR) continue;
      return ReadStatus::kClosed;
    }
    if (ready == 0) continue;
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) return ReadStatus::kClosed;
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return ReadStatus::kClosed;
    }
    got += static_cast<std::size_t>(r);
  }
  return ReadStatus::kOk;
}

bool WriteAll(int fd, const char* buf, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd, buf + sent, n - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

bool SendMessage(int fd, const std::string& payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  const char header[4] = {static_cast<char>(n >> 24), static_cast<char>(n >> 16),
                          static_cast<char>(n >> 8), static_cast<char>(n)};
  return WriteAll(fd, header, 4) && WriteAll(fd, payload.data(), payload.size());
}

std::uint32_t DecodeLength(const char* h) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(h[0])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(h[1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(h[2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(h[3]));
}

}  // namespace

json HandleRequest(const ExperimentConfig& config, std::shared_ptr<const EnvConfig>& env_config,
                   std::unique_ptr<DressingEnv>& env, const json& request, bool& close) {
  close = false;
  if (!request.is_object() || !request.contains("cmd") || !request["cmd"].is_string()) {
    return ErrorReply("request must be an object with a string \"cmd\"");
  }
  const std::string cmd = request["cmd"].get<std::string>();
  try {
    if (!env_config) env_config = BuildEnvConfig(config);
    if (cmd == "spec") return EnvSpecJson(*env_config);
    if (cmd == "close") {
      close = true;
      return {{"ok", true}};
    }
    if (cmd == "reset") {
      std::uint64_t seed = 0;
      if (request.contains("seed")) {
        const json& s = request["seed"];
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0)) {
          return ErrorReply("seed must be a non-negative integer");
        }
        seed = s.get<std::uint64_t>();
      }
      if (request.contains("task")) {
        if (!request["task"].is_string()) return ErrorReply("task must be a string");
        const TaskKind kind = ParseTaskKind(request["task"].get<std::string>());
        if (kind != env_config->task.kind) {
          ExperimentConfig other = config;
          other.task = kind;
          other.start_box.reset();
          other.target_box.reset();
          env_config = BuildEnvConfig(other);
        }
      }
      env = std::make_unique<DressingEnv>(env_config);
      return StepResultToJson(env->Reset(seed));
    }
    if (cmd == "step") {
      if (!env) return ErrorReply("step before reset");
      if (!request.contains("action") || !request["action"].is_array()) {
        return ErrorReply("step needs an \"action\" array");
      }
      std::vector<double> action;
      for (const json& v : request["action"]) {
        if (!v.is_number()) return ErrorReply("action entries must be numbers");
        action.push_back(v.get<double>());
      }
      return StepResultToJson(env->Step(action));
    }
    return ErrorReply("unknown cmd '" + cmd + "'");
  } catch (const Error& e) {
    return ErrorReply(e.what());
  } catch (const json::exception& e) {
    return ErrorReply(e.what());
  }
}

EnvServer::EnvServer(ExperimentConfig config, int port, const std::string& host)
    : config_(std::move(config)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw UsageError("invalid listen address " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 16) < 0) {
    const std::string what = std::strerror(errno);
    ::close(listen_fd_);
    throw Error("cannot listen on " + host + ":" + std::to_string(port) + ": " + what);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

EnvServer::~EnvServer() {
  stop_ = true;
  force_close_ = true;
  for (std::thread& t : workers_) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void EnvServer::Run(const std::atomic<bool>* stop_flag, double drain_seconds) {
  while (!stop_ && !(stop_flag && *stop_flag)) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    ++active_;
    std::lock_guard<std::mutex> lock(mutex_);
    workers_.emplace_back([this, fd] { Serve(fd); });
  }
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                            std::chrono::duration<double>(drain_seconds));
  while (active_ > 0 && std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  force_close_ = true;
  std::lock_guard<std::mutex> lock(mutex_);
  for (std::thread& t : workers_) {
    if (t.joinable()) t.join();
  }
  workers_.clear();
}

void EnvServer::Serve(int fd) {
  std::shared_ptr<const EnvConfig> env_config;
  std::unique_ptr<DressingEnv> env;
  std::string payload;
  for (;;) {
    char header[4];
    if (ReadExact(fd, header, 4, &force_close_) != ReadStatus::kOk) break;
    const std::uint32_t n = DecodeLength(header);
    if (n > kMaxMessageBytes) {
      // The stream cannot be resynchronized after a bogus length.
      SendMessage(fd, ErrorReply("message length " + std::to_string(n) + " exceeds limit").dump());
      break;
    }
    payload.assign(n, '\0');
    if (n > 0 && ReadExact(fd, payload.data(), n, &force_close_) != ReadStatus::kOk) break;
    json reply;
    bool close = false;
    try {
      const json request = json::parse(payload);
      reply = HandleRequest(config_, env_config, env, request, close);
    } catch (const json::parse_error& e) {
      reply = ErrorReply(std::string("malformed JSON: ") + e.what());
    }
    if (!SendMessage(fd, reply.dump())) break;
    if (close) break;
  }
  ::close(fd);
  --active_;
}

EnvClient::EnvClient(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error("cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd_ >= 0 && ::connect(fd_, res->ai_addr, res->ai_addrlen) == 0;
  ::freeaddrinfo(res);
  if (!ok) {
    if (fd_ >= 0) ::close(fd_);
    throw Error("cannot connect to " + host + ":" + std::to_string(port));
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

EnvClient::~EnvClient() {
  if (fd_ >= 0) ::close(fd_);
}

json EnvClient::Request(const json& message) { return RequestRaw(message.dump()); }

json EnvClient::RequestRaw(const std::string& payload) {
  if (!SendMessage(fd_, payload)) throw Error("connection lost while sending");
  char header[4];
  if (ReadExact(fd_, header, 4, nullptr) != ReadStatus::kOk) {
    throw Error("connection closed by server");
  }
  const std::uint32_t n = DecodeLength(header);
  if (n > kMaxMessageBytes) throw Error("reply too large");
  std::string reply(n, '\0');
  if (n > 0 && ReadExact(fd_, reply.data(), n, nullptr) != ReadStatus::kOk) {
    throw Error("connection closed mid-reply");
  }
  return json::parse(reply);
}

}  // namespace donning

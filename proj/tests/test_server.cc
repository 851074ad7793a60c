#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <thread>

#include "donning/errors.h"
#include "wire_compare.h"

using namespace donning;
using nlohmann::json;

namespace {

// Small episodes for everything except the full-length equivalence run.
ExperimentConfig Short(int horizon) {
  ExperimentConfig c;
  c.episode.horizon = horizon;
  c.episode.warmup = 0.1;
  c.trainer.samples_per_iter = horizon;
  return c;
}

struct Running {
  explicit Running(const ExperimentConfig& c) : server(c, 0), loop([this] { server.Run(nullptr, 1.0); }) {}
  ~Running() {
    server.Stop();
    loop.join();
  }
  EnvServer server;
  std::thread loop;
};

// Raw socket for bytes EnvClient refuses to send.
int Connect(int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  return fd;
}

}  // namespace

TEST_CASE("400-step episode over TCP equals the in-process episode") {
  int steps = 0;
  const std::string mismatch = wire::EpisodeOverTcp(ExperimentConfig{}, 77, &steps);
  CHECK_MESSAGE(mismatch.empty(), mismatch);
  CHECK(steps == 401);
}

TEST_CASE("spec, reset with a task and request errors") {
  Running s(Short(5));
  EnvClient c("127.0.0.1", s.server.port());
  const json spec = c.Request({{"cmd", "spec"}});
  CHECK(spec["obs_dim"] == 163);
  CHECK(spec["act_dim"] == 11);
  CHECK(spec["horizon"] == 5);
  CHECK(spec["task"] == "FixedGown");

  CHECK(c.Request({{"cmd", "step"}, {"action", std::vector<double>(11, 0.0)}})["error"] ==
        "step before reset");
  CHECK(c.Request({{"nope", 1}}).contains("error"));
  CHECK(c.Request({{"cmd", "fly"}}).contains("error"));
  CHECK(c.Request({{"cmd", "reset"}, {"seed", -3}}).contains("error"));
  CHECK(c.Request({{"cmd", "reset"}, {"task", "Sideways"}}).contains("error"));
  CHECK(c.RequestRaw("{\"cmd\": ").contains("error"));
  CHECK(c.RequestRaw("").contains("error"));

  const json r = c.Request({{"cmd", "reset"}, {"seed", 3}, {"task", "SideLinear"}});
  REQUIRE(!r.contains("error"));
  CHECK(r["observation"].size() == 163);
  CHECK(c.Request({{"cmd", "step"}, {"action", std::vector<double>(3, 0.0)}}).contains("error"));
  CHECK(c.Request({{"cmd", "step"}, {"action", {1, 2, "x"}}}).contains("error"));
  CHECK(c.Request({{"cmd", "step"}}).contains("error"));
  json last;
  for (int i = 0; i < 5; ++i) {
    last = c.Request({{"cmd", "step"}, {"action", std::vector<double>(11, 0.0)}});
    REQUIRE(!last.contains("error"));
  }
  CHECK(last["done"] == true);
  CHECK(last["diagnostics"]["step"] == 5);
  CHECK(c.Request({{"cmd", "step"}, {"action", std::vector<double>(11, 0.0)}}).contains("error"));
  CHECK(c.Request({{"cmd", "close"}})["ok"] == true);
}

TEST_CASE("oversized length prefix closes the connection with an error") {
  Running s(Short(5));
  const int fd = Connect(s.server.port());
  const unsigned char header[4] = {0xff, 0xff, 0xff, 0xff};
  REQUIRE(::send(fd, header, 4, 0) == 4);
  unsigned char len[4];
  REQUIRE(::recv(fd, len, 4, MSG_WAITALL) == 4);
  const std::uint32_t n = (std::uint32_t{len[0]} << 24) | (std::uint32_t{len[1]} << 16) |
                          (std::uint32_t{len[2]} << 8) | len[3];
  std::string body(n, '\0');
  REQUIRE(::recv(fd, body.data(), n, MSG_WAITALL) == static_cast<ssize_t>(n));
  CHECK(json::parse(body)["error"].get<std::string>().find("exceeds") != std::string::npos);
  char byte;
  CHECK(::recv(fd, &byte, 1, 0) == 0);
  ::close(fd);

  // A client that vanishes mid-message does not take the server down.
  const int half = Connect(s.server.port());
  const unsigned char partial[6] = {0, 0, 0, 20, '{', '"'};
  ::send(half, partial, sizeof partial, 0);
  ::close(half);
  EnvClient c("127.0.0.1", s.server.port());
  CHECK(c.Request({{"cmd", "spec"}})["obs_dim"] == 163);
}

TEST_CASE("concurrent clients get independent environments") {
  Running s(Short(8));
  const auto play = [&](std::uint64_t seed) {
    EnvClient c("127.0.0.1", s.server.port());
    std::vector<json> trace{c.Request({{"cmd", "reset"}, {"seed", seed}})};
    for (int i = 0; i < 8; ++i) {
      std::vector<double> a(11, 0.1 * static_cast<double>(seed % 7) - 0.3);
      trace.push_back(c.Request({{"cmd", "step"}, {"action", a}}));
    }
    return trace;
  };
  // Reference traces played one at a time.
  std::vector<std::vector<json>> want;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) want.push_back(play(seed));

  std::vector<std::vector<json>> got(4);
  std::vector<std::thread> clients;
  for (int k = 0; k < 4; ++k) {
    clients.emplace_back([&, k] { got[k] = play(static_cast<std::uint64_t>(k + 1)); });
  }
  for (std::thread& t : clients) t.join();
  for (int k = 0; k < 4; ++k) CHECK(got[k] == want[k]);
  CHECK(want[0] != want[1]);
}

TEST_CASE("bind failures and bad addresses") {
  CHECK_THROWS_AS(EnvServer(Short(5), 0, "not-an-address"), UsageError);
  Running s(Short(5));
  CHECK_THROWS_AS(EnvServer(Short(5), s.server.port()), Error);
  CHECK_THROWS_AS(EnvClient("127.0.0.1", 1), Error);
}

#pragma once

// Plays one seeded episode in-process and over TCP with the same random
// actions and reports the first difference. Shared by the server tests and
// the acceptance suite.

#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "donning/harness.h"
#include "donning/server.h"

namespace wire {

inline std::string Compare(const donning::StepResult& local, const nlohmann::json& remote, int step) {
  std::ostringstream why;
  if (remote.contains("error")) {
    why << "step " << step << ": server error " << remote["error"];
    return why.str();
  }
  const auto& obs = remote.at("observation");
  if (obs.size() != local.observation.values.size()) {
    why << "step " << step << ": observation size " << obs.size();
    return why.str();
  }
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].get<double>() != local.observation.values[i]) {
      why << "step " << step << ": observation[" << i << "] " << obs[i].get<double>()
          << " != " << local.observation.values[i];
      return why.str();
    }
  }
  const auto& rw = remote.at("reward");
  const donning::RewardBreakdown& r = local.reward;
  if (rw.at("total").get<double>() != r.total || rw.at("r_p").get<double>() != r.r_p ||
      rw.at("r_d").get<double>() != r.r_d || rw.at("r_g").get<double>() != r.r_g ||
      rw.at("r_u").get<double>() != r.r_u || rw.at("k_int").get<int>() != r.k_int ||
      rw.at("containment_depth").get<double>() != r.containment_depth ||
      rw.at("max_deformation").get<double>() != r.max_deformation) {
    why << "step " << step << ": reward " << rw.dump();
    return why.str();
  }
  if (remote.at("done").get<bool>() != local.done) {
    why << "step " << step << ": done flag";
    return why.str();
  }
  const auto& d = remote.at("diagnostics");
  const donning::StepDiagnostics& ld = local.diagnostics;
  const bool same = d.at("step").get<int>() == ld.step && d.at("time").get<double>() == ld.time &&
                    d.at("k_int").get<int>() == ld.k_int &&
                    d.at("containment_depth").get<double>() == ld.containment_depth &&
                    d.at("max_deformation").get<double>() == ld.max_deformation &&
                    d.at("task_case").get<int>() == static_cast<int>(ld.task_case) &&
                    d.at("diverged").get<bool>() == ld.diverged &&
                    d.at("feature_fit_failed").get<bool>() == ld.feature_fit_failed &&
                    d.at("gripper")[0].get<double>() == ld.gripper.x() &&
                    d.at("gripper")[1].get<double>() == ld.gripper.y() &&
                    d.at("gripper")[2].get<double>() == ld.gripper.z();
  if (!same) {
    why << "step " << step << ": diagnostics " << d.dump();
    return why.str();
  }
  return "";
}

// Returns "" when every step matches; `steps` counts the reset.
inline std::string EpisodeOverTcp(const donning::ExperimentConfig& config, std::uint64_t seed,
                                  int* steps = nullptr) {
  using namespace donning;
  EnvServer server(config, 0);
  std::thread loop([&] { server.Run(nullptr, 1.0); });
  std::string mismatch;
  int n = 0;
  try {
    EnvClient client("127.0.0.1", server.port());
    DressingEnv env(BuildEnvConfig(config));
    StepResult local = env.Reset(seed);
    nlohmann::json remote = client.Request({{"cmd", "reset"}, {"seed", seed}});
    mismatch = Compare(local, remote, 0);
    ++n;
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    while (mismatch.empty() && !local.done) {
      std::vector<double> a(kActuatedCount);
      for (double& x : a) x = u(rng);
      local = env.Step(a);
      remote = client.Request({{"cmd", "step"}, {"action", a}});
      mismatch = Compare(local, remote, n);
      ++n;
    }
    client.Request({{"cmd", "close"}});
  } catch (const std::exception& e) {
    mismatch = e.what();
  }
  server.Stop();
  loop.join();
  if (steps) *steps = n;
  return mismatch;
}

}  // namespace wire

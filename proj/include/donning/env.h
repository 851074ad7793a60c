#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "donning/body.h"
#include "donning/clothsim.h"
#include "donning/garment.h"
#include "donning/percept.h"
#include "donning/rewards.h"

namespace donning {

enum class TaskKind { kFixedGown, kFrontLinear, kSideLinear };

std::string TaskName(TaskKind kind);
// Accepts the names produced by TaskName; throws ConfigError otherwise.
TaskKind ParseTaskKind(const std::string& name);

struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Zero();  // full edge lengths, m
};

struct TaskSpec {
  TaskKind kind = TaskKind::kFixedGown;
  Box start;
  Box target;                // unused for FixedGown
  double travel_time = 10.0; // s, linear tasks
};

// Default boxes for a body whose right shoulder sits at `shoulder`. The
// character faces +z; front boxes lie on +z, side boxes on the right (-x).
TaskSpec DefaultTask(TaskKind kind, const Vec3& shoulder);
TaskSpec DefaultTask(TaskKind kind, const BodyModel& body);

// Throws ConfigError for negative box sizes, non-finite values or a
// non-positive travel time.
void ValidateTask(const TaskSpec& task);

struct EpisodeConfig {
  int horizon = 400;
  int frame_skip = 4;
  double sim_dt = 0.01;
  double gamma = 0.995;
  double warmup = 0.5;  // s of cloth settling before the first observation

  double control_dt() const { return frame_skip * sim_dt; }
};

struct EnvConfig {
  TaskSpec task;
  BodyModel body = DefaultBodyModel();
  std::shared_ptr<const GarmentMesh> garment;  // rest shape in the garment frame
  ClothParams cloth;
  EpisodeConfig episode;
  RewardWeights weights;
  DeformationParams deformation;
  ObservationOptions observation;
};

// Default FixedGown setup on the procedural sleeve.
EnvConfig DefaultEnvConfig(TaskKind kind = TaskKind::kFixedGown);

struct StepDiagnostics {
  int step = 0;  // control steps taken so far
  double time = 0.0;
  int k_int = 0;
  double containment_depth = 0.0;
  double max_deformation = 0.0;
  TaskVectorCase task_case = TaskVectorCase::kSeekFeature;
  bool diverged = false;
  bool feature_fit_failed = false;  // kept the previous plane this step
  Vec3 gripper = Vec3::Zero();
};

struct StepResult {
  Observation observation;
  RewardBreakdown reward;
  bool done = false;
  StepDiagnostics diagnostics;
};

class DressingEnv {
 public:
  explicit DressingEnv(std::shared_ptr<const EnvConfig> config);

  // Samples the gripper path, places and settles the garment, and returns
  // the first observation. Deterministic in `seed`.
  StepResult Reset(std::uint64_t seed);
  // Throws UsageError after the episode ended or before Reset,
  // InvalidActionError for a wrong-sized or non-finite action.
  StepResult Step(std::span<const double> action);

  const EnvConfig& config() const { return *config_; }
  const BodyState& body() const { return body_; }
  const ClothState& cloth() const { return cloth_; }
  const FeatureLoop& feature() const { return feature_; }
  const Vec3& gripper_start() const { return gripper_start_; }
  const Vec3& gripper_target() const { return gripper_target_; }
  const Vec3& gripper() const { return gripper_; }
  const Mat3& garment_rotation() const { return garment_rotation_; }
  int step_index() const { return step_; }
  bool done() const { return done_; }
  bool active() const { return active_; }

  // Gripper position `t` seconds after the warm-up ended.
  Vec3 GripperAt(double t) const;

 private:
  StepResult Evaluate(bool diverged);
  std::vector<Vec3> PinTargets(const Vec3& gripper) const;

  std::shared_ptr<const EnvConfig> config_;
  BodyState body_;
  ClothState cloth_;
  FeatureLoop feature_;
  Vec3 gripper_start_ = Vec3::Zero();
  Vec3 gripper_target_ = Vec3::Zero();
  Vec3 gripper_ = Vec3::Zero();
  Mat3 garment_rotation_ = Mat3::Identity();
  std::vector<Vec3> pin_offsets_;  // world-frame offsets from the gripper
  long substep_ = 0;
  int step_ = 0;
  bool done_ = false;
  bool active_ = false;
};

// Garment rotation about +y that turns the opening (rest -n of the feature
// plane) toward the XZ projection of `direction`. Identity for a zero
// projection.
Mat3 OrientationToward(const Vec3& direction);

// Recomputes the reward breakdown of a state from scratch.
RewardBreakdown RecomputeReward(const EnvConfig& config, const BodyState& body,
                                const ClothState& cloth, const FeatureLoop& feature);

// Per-episode action source. Returned callables are used by one thread.
using ActionFn = std::function<std::vector<double>(const Observation&)>;
using PolicyFactory = std::function<ActionFn(std::uint64_t episode_seed)>;

PolicyFactory ZeroPolicy(int act_dim = kActuatedCount);
// Uniform actions in [-1, 1], seeded per episode.
PolicyFactory RandomPolicy(int act_dim = kActuatedCount);

struct EpisodeTrace {
  std::uint64_t seed = 0;
  std::vector<double> progress;         // r_p after each action
  std::vector<double> max_deformation;  // max_i d_i after each action
  double total_reward = 0.0;
  bool diverged = false;
};

struct EvaluationResult {
  std::vector<EpisodeTrace> episodes;
  // Per control step over episodes; index t is the state after action t.
  std::vector<double> progress_mean, progress_std;
  std::vector<double> deformation_mean, deformation_std;
  double final_progress_mean = 0.0, final_progress_std = 0.0;
  // Over episodes of each episode's largest max deformation.
  double episode_max_deformation_mean = 0.0, episode_max_deformation_std = 0.0;
  double return_mean = 0.0, return_std = 0.0;
  // Observations of the first episode, from Reset through the last step.
  std::vector<std::vector<double>> first_episode_observations;
};

// Seeds of the evaluation episodes derived from a base seed.
std::vector<std::uint64_t> EpisodeSeeds(std::uint64_t base_seed, int episodes);

EvaluationResult Evaluate(const std::shared_ptr<const EnvConfig>& config,
                          const PolicyFactory& policy, std::span<const std::uint64_t> seeds,
                          int workers = 1);

// Population mean and standard deviation.
void MeanStd(std::span<const double> values, double& mean, double& stddev);

}  // namespace donning

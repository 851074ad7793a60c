#include "donning/env.h"

#include <algorithm>
#include <cmath>

#include "donning/errors.h"
#include "donning/parallel.h"

namespace donning {

namespace {

Vec3 SampleBox(const Box& box, std::mt19937_64& rng) {
  Vec3 p;
  for (int k = 0; k < 3; ++k) p[k] = box.center[k] + (UnitInterval(rng()) - 0.5) * box.size[k];
  return p;
}

bool Finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

std::string TaskName(TaskKind kind) {
  switch (kind) {
    case TaskKind::kFixedGown: return "FixedGown";
    case TaskKind::kFrontLinear: return "FrontLinear";
    case TaskKind::kSideLinear: return "SideLinear";
  }
  return "FixedGown";
}

TaskKind ParseTaskKind(const std::string& name) {
  for (TaskKind k : {TaskKind::kFixedGown, TaskKind::kFrontLinear, TaskKind::kSideLinear}) {
    if (TaskName(k) == name) return k;
  }
  throw ConfigError("unknown task '" + name + "' (expected FixedGown, FrontLinear or SideLinear)");
}

TaskSpec DefaultTask(TaskKind kind, const Vec3& shoulder) {
  TaskSpec t;
  t.kind = kind;
  const double h = shoulder.y();
  switch (kind) {
    case TaskKind::kFixedGown:
      // In front of the right shoulder, slightly above it.
      t.start = {{shoulder.x(), h + 0.05, 0.45}, {0.6, 0.35, 0.1}};
      t.target = t.start;
      break;
    case TaskKind::kFrontLinear:
      t.start = {{0.0, h, 0.6}, {0.4, 0.45, 0.1}};
      t.target = {{0.0, h, 0.2}, {0.3, 0.3, 0.1}};
      break;
    case TaskKind::kSideLinear:
      // Offsets count from the right shoulder, not the body axis; a target
      // 0.2 m from the axis would put the grasp inside the arm.
      t.start = {{shoulder.x() - 0.6, h, 0.0}, {0.1, 0.3, 0.5}};
      t.target = {{shoulder.x() - 0.2, h, 0.0}, {0.1, 0.3, 0.3}};
      break;
  }
  return t;
}

TaskSpec DefaultTask(TaskKind kind, const BodyModel& body) {
  const std::vector<double> q(body.dof_count(), 0.0);
  return DefaultTask(kind, ForwardKinematics(body, q).joint_world.back());
}

void ValidateTask(const TaskSpec& task) {
  for (const Box* b : {&task.start, &task.target}) {
    if (!Finite(b->center) || !Finite(b->size) || (b->size.array() < 0.0).any()) {
      throw ConfigError("task box needs finite center and non-negative size");
    }
  }
  if (!(task.travel_time > 0.0) || !std::isfinite(task.travel_time)) {
    throw ConfigError("task travel_time must be positive");
  }
}

EnvConfig DefaultEnvConfig(TaskKind kind) {
  EnvConfig c;
  c.task = DefaultTask(kind, c.body);
  c.garment = std::make_shared<const GarmentMesh>(MakeSleeve());
  return c;
}

Mat3 OrientationToward(const Vec3& direction) {
  const Vec3 d(direction.x(), 0.0, direction.z());
  if (!(d.norm() > 0.0)) return Mat3::Identity();
  // The rest opening faces -z in the garment frame. Rotating by phi about
  // +y sends +z to (sin phi, 0, cos phi), so -z must land on d.
  const double phi = std::atan2(-d.x(), -d.z());
  return AxisRotation(Vec3::UnitY(), phi);
}

RewardBreakdown RecomputeReward(const EnvConfig& config, const BodyState& body,
                                const ClothState& cloth, const FeatureLoop& feature) {
  const GarmentMesh& mesh = *config.garment;
  const Containment containment = ComputeContainment(body, feature);
  const Progress progress = ProgressReward(body, feature, containment);
  const Deformation deformation = DeformationPenalty(mesh, cloth, config.deformation);
  const std::vector<ContactRecord> hand =
      EndEffectorContacts(cloth.contacts, config.body.hand_capsule);
  const double r_g = GeodesicReward(mesh, hand, containment.k_int);
  const double r_u = UprightReward(config.body, body);
  RewardBreakdown out = TotalReward(progress.r_p, deformation.r_d, r_g, r_u, config.weights);
  out.k_int = containment.k_int;
  out.containment_depth = progress.depth;
  out.max_deformation = deformation.max_deformation;
  return out;
}

DressingEnv::DressingEnv(std::shared_ptr<const EnvConfig> config) : config_(std::move(config)) {
  if (!config_ || !config_->garment) throw ConfigError("environment needs a garment");
  ValidateTask(config_->task);
  const EpisodeConfig& e = config_->episode;
  if (e.horizon < 1 || e.frame_skip < 1 || !(e.sim_dt > 0.0) || !(e.warmup >= 0.0)) {
    throw ConfigError("episode needs horizon >= 1, frame_skip >= 1, sim_dt > 0, warmup >= 0");
  }
  if (config_->garment->pins.empty()) throw ConfigError("garment has no pinned vertices");
  config_->body.Validate();
}

Vec3 DressingEnv::GripperAt(double t) const {
  const TaskSpec& task = config_->task;
  if (task.kind == TaskKind::kFixedGown) return gripper_start_;
  const double f = t / task.travel_time;
  if (f >= 1.0) return gripper_target_;
  if (f <= 0.0) return gripper_start_;
  return gripper_start_ + f * (gripper_target_ - gripper_start_);
}

std::vector<Vec3> DressingEnv::PinTargets(const Vec3& gripper) const {
  std::vector<Vec3> out;
  out.reserve(pin_offsets_.size());
  for (const Vec3& o : pin_offsets_) out.push_back(gripper + o);
  return out;
}

StepResult DressingEnv::Reset(std::uint64_t seed) {
  const EnvConfig& c = *config_;
  const GarmentMesh& mesh = *c.garment;
  std::mt19937_64 rng(seed);
  gripper_start_ = SampleBox(c.task.start, rng);
  gripper_target_ =
      c.task.kind == TaskKind::kFixedGown ? gripper_start_ : SampleBox(c.task.target, rng);
  garment_rotation_ = c.task.kind == TaskKind::kFixedGown
                          ? Mat3::Identity()
                          : OrientationToward(gripper_target_ - gripper_start_);

  Vec3 grasp = Vec3::Zero();
  for (int p : mesh.pins) grasp += mesh.vertices[p];
  grasp /= static_cast<double>(mesh.pins.size());

  cloth_ = MakeClothState(mesh);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    cloth_.positions[v] = gripper_start_ + garment_rotation_ * (mesh.vertices[v] - grasp);
  }
  cloth_.prev_positions = cloth_.positions;
  pin_offsets_.clear();
  cloth_.pins.clear();
  for (int p : mesh.pins) {
    pin_offsets_.push_back(garment_rotation_ * (mesh.vertices[p] - grasp));
    cloth_.pins.push_back({p, cloth_.positions[p]});
  }
  AttachTethers(mesh, cloth_);

  const std::vector<double> q(c.body.dof_count(), 0.0);
  body_ = ForwardKinematics(c.body, q);

  const std::vector<Vec3> targets = PinTargets(gripper_start_);
  const long warmup = std::lround(c.episode.warmup / c.episode.sim_dt);
  for (long i = 0; i < warmup; ++i) {
    cloth_ = StepCloth(mesh, cloth_, body_, targets, c.episode.sim_dt, c.cloth);
  }
  feature_ = FitFeaturePlane(mesh, mesh.active(), cloth_.positions);

  gripper_ = gripper_start_;
  substep_ = 0;
  step_ = 0;
  done_ = false;
  active_ = true;
  return Evaluate(false);
}

StepResult DressingEnv::Step(std::span<const double> action) {
  if (!active_) throw UsageError("step called before reset");
  if (done_) throw UsageError("step called after the episode ended");
  const EnvConfig& c = *config_;
  if (static_cast<int>(action.size()) != kActuatedCount) {
    throw InvalidActionError("action has " + std::to_string(action.size()) + " entries, expected " +
                             std::to_string(kActuatedCount));
  }
  for (double a : action) {
    if (!std::isfinite(a)) throw InvalidActionError("action contains a non-finite value");
  }

  const double dt = c.episode.sim_dt;
  const long travel = std::max(1L, std::lround(c.task.travel_time / dt));
  bool diverged = false;
  for (int j = 0; j < c.episode.frame_skip; ++j) {
    const BodyState next_body = IntegrateAction(c.body, body_, action, dt);
    const long n = substep_ + 1;
    // Substep counts keep the path exact: the gripper lands on the target
    // at n == travel with no rounding from accumulated time.
    const Vec3 gripper =
        n >= travel ? GripperAt(c.task.travel_time) : GripperAt(c.task.travel_time * n / travel);
    try {
      cloth_ = StepCloth(*c.garment, cloth_, next_body, PinTargets(gripper), dt, c.cloth);
    } catch (const SolverDivergenceError&) {
      diverged = true;
      break;
    }
    body_ = next_body;
    gripper_ = gripper;
    substep_ = n;
  }
  ++step_;
  done_ = diverged || step_ >= c.episode.horizon;
  return Evaluate(diverged);
}

StepResult DressingEnv::Evaluate(bool diverged) {
  const EnvConfig& c = *config_;
  const GarmentMesh& mesh = *c.garment;
  StepResult out;
  try {
    feature_ = FitFeaturePlane(mesh, mesh.active(), cloth_.positions);
  } catch (const DegenerateGeometryError&) {
    out.diagnostics.feature_fit_failed = true;
  }
  out.reward = RecomputeReward(c, body_, cloth_, feature_);
  out.observation =
      BuildObservation(c.body, body_, mesh, cloth_, feature_, out.reward.k_int, c.observation);
  out.done = done_;

  StepDiagnostics& d = out.diagnostics;
  d.step = step_;
  d.time = substep_ * c.episode.sim_dt;
  d.k_int = out.reward.k_int;
  d.containment_depth = out.reward.containment_depth;
  d.max_deformation = out.reward.max_deformation;
  d.task_case = out.observation.task_case;
  d.diverged = diverged;
  d.gripper = gripper_;
  return out;
}

PolicyFactory ZeroPolicy(int act_dim) {
  return [act_dim](std::uint64_t) {
    return [act_dim](const Observation&) { return std::vector<double>(act_dim, 0.0); };
  };
}

PolicyFactory RandomPolicy(int act_dim) {
  return [act_dim](std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(MixSeed(seed, 0x52414e44));
    return [act_dim, rng](const Observation&) {
      std::vector<double> a(act_dim);
      for (double& x : a) x = 2.0 * UnitInterval((*rng)()) - 1.0;
      return a;
    };
  };
}

std::vector<std::uint64_t> EpisodeSeeds(std::uint64_t base_seed, int episodes) {
  std::vector<std::uint64_t> out(episodes);
  for (int i = 0; i < episodes; ++i) out[i] = MixSeed(base_seed, static_cast<std::uint64_t>(i));
  return out;
}

void MeanStd(std::span<const double> values, double& mean, double& stddev) {
  mean = 0.0;
  stddev = 0.0;
  if (values.empty()) return;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  stddev = std::sqrt(ss / static_cast<double>(values.size()));
}

EvaluationResult Evaluate(const std::shared_ptr<const EnvConfig>& config,
                          const PolicyFactory& policy, std::span<const std::uint64_t> seeds,
                          int workers) {
  EvaluationResult out;
  out.episodes.resize(seeds.size());
  ParallelFor(static_cast<int>(seeds.size()), workers, [&](int i) {
    DressingEnv env(config);
    EpisodeTrace& trace = out.episodes[i];
    trace.seed = seeds[i];
    ActionFn act = policy(seeds[i]);
    StepResult r = env.Reset(seeds[i]);
    if (i == 0) out.first_episode_observations.push_back(r.observation.values);
    while (!r.done) {
      std::vector<double> a = act(r.observation);
      for (double& x : a) x = std::clamp(x, -1.0, 1.0);
      r = env.Step(a);
      trace.total_reward += r.reward.total;
      trace.progress.push_back(r.reward.r_p);
      trace.max_deformation.push_back(r.reward.max_deformation);
      trace.diverged = trace.diverged || r.diagnostics.diverged;
      if (i == 0) out.first_episode_observations.push_back(r.observation.values);
    }
  });

  const int steps = config->episode.horizon;
  const std::size_t n = out.episodes.size();
  std::vector<double> col(n);
  // A diverged episode holds its last state for the remaining steps.
  auto at = [&](const std::vector<double>& v, int t) {
    return v[std::min<std::size_t>(t, v.size() - 1)];
  };
  for (auto* pair : {&out.progress_mean, &out.deformation_mean}) pair->assign(steps, 0.0);
  out.progress_std.assign(steps, 0.0);
  out.deformation_std.assign(steps, 0.0);
  for (int t = 0; t < steps && n > 0; ++t) {
    for (std::size_t e = 0; e < n; ++e) col[e] = at(out.episodes[e].progress, t);
    MeanStd(col, out.progress_mean[t], out.progress_std[t]);
    for (std::size_t e = 0; e < n; ++e) col[e] = at(out.episodes[e].max_deformation, t);
    MeanStd(col, out.deformation_mean[t], out.deformation_std[t]);
  }
  for (std::size_t e = 0; e < n; ++e) col[e] = out.episodes[e].progress.back();
  MeanStd(col, out.final_progress_mean, out.final_progress_std);
  for (std::size_t e = 0; e < n; ++e) {
    const auto& d = out.episodes[e].max_deformation;
    col[e] = *std::max_element(d.begin(), d.end());
  }
  MeanStd(col, out.episode_max_deformation_mean, out.episode_max_deformation_std);
  for (std::size_t e = 0; e < n; ++e) col[e] = out.episodes[e].total_reward;
  MeanStd(col, out.return_mean, out.return_std);
  return out;
}

}  // namespace donning

#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "donning/math.h"

namespace donning {

inline constexpr int kDofCount = 22;
inline constexpr int kActuatedCount = 11;
inline constexpr int kSensorCount = 22;

struct DofSpec {
  std::string name;
  int joint = 0;
  Vec3 axis = Vec3::UnitX();
  double lower = 0.0;  // rad
  double upper = 0.0;  // rad
  double vel_limit = 4.0;  // rad/s
  bool actuated = false;
};

struct JointSpec {
  std::string name;
  int parent = -1;             // parents precede children
  Vec3 offset = Vec3::Zero();  // from the parent joint, in the parent frame at q = 0
  std::vector<int> dofs;       // applied in order, each a rotation about its axis
};

struct CapsuleSpec {
  std::string name;
  int joint_a = 0;
  int joint_b = 0;
  double radius = 0.0;
};

// Haptic sensor anchored on a capsule's medial axis at a + t (b - a).
struct SensorSpec {
  int capsule = 0;
  double t = 0.5;
};

struct ActuationParams {
  double accel_scale = 10.0;  // rad/s^2 at |action| = 1
  double damping = 2.0;       // 1/s
};

struct BodyModel {
  std::vector<JointSpec> joints;
  std::vector<DofSpec> dofs;
  std::vector<CapsuleSpec> capsules;
  std::vector<SensorSpec> sensors;
  // Dressed limb joints p_0 (end-effector tip) .. p_m (most proximal).
  std::vector<int> limb_joints;
  int hand_capsule = 0;
  std::vector<int> torso_dofs;
  ActuationParams actuation;

  int dof_count() const { return static_cast<int>(dofs.size()); }
  // DOF indices driven by the action vector, in action order.
  std::vector<int> ActuatedDofs() const;
  // Throws ConfigError when a structural invariant does not hold.
  void Validate() const;
};

// Adult proportions with 22 DOF (11 actuated: torso and right arm), the
// root fixed at the origin, y up and the character facing +z. The right
// arm hangs along -x at q = 0.
BodyModel DefaultBodyModel();

// Distributes `count` sensors over capsules proportionally to capsule
// length with at least one per capsule (largest-remainder rounding).
std::vector<SensorSpec> DistributeSensors(const BodyModel& model, int count);

BodyModel BodyModelFromJson(const nlohmann::json& doc);
nlohmann::json BodyModelToJson(const BodyModel& model);
BodyModel LoadBodyModel(const std::string& path);

struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.0;
};

struct BodyState {
  std::vector<double> q;     // rad
  std::vector<double> qdot;  // rad/s
  std::vector<Vec3> joint_positions;  // every joint, world frame
  std::vector<Vec3> joint_world;      // limb joints p_0 .. p_m
  std::vector<Vec3> sensor_world;
  std::vector<Capsule> capsule_world;
};

struct BoneSegment {
  Vec3 proximal;  // p_i
  Vec3 distal;    // p_{i-1}
  double length() const { return (proximal - distal).norm(); }
};

// Throws LimitViolationError naming the first DOF outside its limits.
BodyState ForwardKinematics(const BodyModel& model, std::span<const double> q,
                            std::span<const double> qdot = {});

// Kinematic actuation: bounded accelerations with viscous damping, velocity
// and position clamps. Unactuated DOFs are held with zero velocity.
BodyState IntegrateAction(const BodyModel& model, const BodyState& state,
                          std::span<const double> action, double dt);

// b_1 .. b_m, where b_i joins p_i to p_{i-1}.
std::vector<BoneSegment> BoneSegments(const BodyState& state);

}  // namespace donning

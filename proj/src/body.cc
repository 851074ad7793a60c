#include "donning/body.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "donning/errors.h"

namespace donning {
namespace {

int AddJoint(BodyModel& m, std::string name, int parent, const Vec3& offset) {
  JointSpec j;
  j.name = std::move(name);
  j.parent = parent;
  j.offset = offset;
  m.joints.push_back(std::move(j));
  return static_cast<int>(m.joints.size()) - 1;
}

void AddDof(BodyModel& m, int joint, std::string name, const Vec3& axis, double lower,
            double upper, bool actuated) {
  DofSpec d;
  d.name = std::move(name);
  d.joint = joint;
  d.axis = axis;
  d.lower = lower;
  d.upper = upper;
  d.actuated = actuated;
  m.joints[joint].dofs.push_back(static_cast<int>(m.dofs.size()));
  m.dofs.push_back(std::move(d));
}

int AddCapsule(BodyModel& m, std::string name, int a, int b, double radius) {
  m.capsules.push_back({std::move(name), a, b, radius});
  return static_cast<int>(m.capsules.size()) - 1;
}

Vec3 JsonVec3(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw ConfigError("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

nlohmann::json Vec3Json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

std::vector<int> BodyModel::ActuatedDofs() const {
  std::vector<int> out;
  for (int i = 0; i < dof_count(); ++i) {
    if (dofs[i].actuated) out.push_back(i);
  }
  return out;
}

void BodyModel::Validate() const {
  if (dof_count() != kDofCount) {
    throw ConfigError("body must have exactly 22 DOF, found " + std::to_string(dof_count()));
  }
  if (static_cast<int>(ActuatedDofs().size()) != kActuatedCount) {
    throw ConfigError("body must have exactly 11 actuated DOF");
  }
  if (static_cast<int>(sensors.size()) != kSensorCount) {
    throw ConfigError("body must have exactly 22 haptic sensors");
  }
  const int nj = static_cast<int>(joints.size());
  for (int j = 0; j < nj; ++j) {
    if (joints[j].parent >= j) throw ConfigError("joint parents must precede children");
    if (j > 0 && joints[j].parent < 0) throw ConfigError("only joint 0 may be the root");
    for (int d : joints[j].dofs) {
      if (d < 0 || d >= dof_count() || dofs[d].joint != j) {
        throw ConfigError("joint " + joints[j].name + " lists an inconsistent DOF");
      }
    }
  }
  if (nj == 0 || !joints[0].dofs.empty() || joints[0].offset != Vec3::Zero()) {
    throw ConfigError("root joint must be fixed at the origin");
  }
  for (const DofSpec& d : dofs) {
    if (!(d.lower <= d.upper)) throw ConfigError("empty joint limit interval on " + d.name);
    if (!(d.vel_limit > 0.0)) throw ConfigError("velocity limit must be positive on " + d.name);
    if (!(d.axis.norm() > 0.0)) throw ConfigError("zero rotation axis on " + d.name);
  }
  for (const CapsuleSpec& c : capsules) {
    if (!(c.radius > 0.0)) throw ConfigError("capsule " + c.name + " needs a positive radius");
    if (c.joint_a < 0 || c.joint_a >= nj || c.joint_b < 0 || c.joint_b >= nj) {
      throw ConfigError("capsule " + c.name + " references a missing joint");
    }
  }
  for (const SensorSpec& s : sensors) {
    if (s.capsule < 0 || s.capsule >= static_cast<int>(capsules.size()) || s.t < 0.0 || s.t > 1.0) {
      throw ConfigError("invalid sensor anchor");
    }
  }
  if (limb_joints.size() < 2) throw ConfigError("limb chain needs at least two joints");
  for (int j : limb_joints) {
    if (j < 0 || j >= nj) throw ConfigError("limb chain references a missing joint");
  }
  if (hand_capsule < 0 || hand_capsule >= static_cast<int>(capsules.size())) {
    throw ConfigError("hand capsule index out of range");
  }
  for (int d : torso_dofs) {
    if (d < 0 || d >= dof_count()) throw ConfigError("torso DOF index out of range");
  }
}

std::vector<SensorSpec> DistributeSensors(const BodyModel& model, int count) {
  const int nc = static_cast<int>(model.capsules.size());
  if (count < nc) throw ConfigError("fewer sensors than capsules");
  BodyState rest = ForwardKinematics(model, std::vector<double>(model.dof_count(), 0.0));
  std::vector<double> lengths(nc);
  for (int c = 0; c < nc; ++c) {
    lengths[c] = (rest.capsule_world[c].b - rest.capsule_world[c].a).norm();
  }
  const double total = std::accumulate(lengths.begin(), lengths.end(), 0.0);
  // One sensor each, the remainder split by length with largest-remainder rounding.
  const int spare = count - nc;
  std::vector<int> per(nc, 1);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int c = 0; c < nc; ++c) {
    const double share = count * lengths[c] / total - 1.0;
    const int whole = std::max(0, static_cast<int>(std::floor(share)));
    per[c] += whole;
    assigned += whole;
    remainders.push_back({share - whole, c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < spare - assigned; ++k) per[remainders[k % nc].second] += 1;
  std::vector<SensorSpec> sensors;
  for (int c = 0; c < nc; ++c) {
    for (int k = 0; k < per[c]; ++k) sensors.push_back({c, (k + 0.5) / per[c]});
  }
  return sensors;
}

BodyModel DefaultBodyModel() {
  BodyModel m;
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();

  const int pelvis = AddJoint(m, "pelvis", -1, Vec3::Zero());
  const int spine = AddJoint(m, "spine", pelvis, {0.0, 0.10, 0.0});
  AddDof(m, spine, "torso_pitch", ex, -0.6, 0.6, true);
  AddDof(m, spine, "torso_roll", ez, -0.4, 0.4, true);
  AddDof(m, spine, "torso_yaw", ey, -0.7, 0.7, true);

  const int neck = AddJoint(m, "neck", spine, {0.0, 0.45, 0.0});
  AddDof(m, neck, "neck_pitch", ex, -0.6, 0.6, false);
  AddDof(m, neck, "neck_roll", ez, -0.5, 0.5, false);
  AddDof(m, neck, "neck_yaw", ey, -1.0, 1.0, false);
  const int head_top = AddJoint(m, "head_top", neck, {0.0, 0.22, 0.0});

  // Right arm on -x, left arm mirrored on +x. Flexion axes are chosen so
  // positive angles move the limb forward (+z) or outward.
  struct Side {
    const char* prefix;
    double sx;
  };
  int right_joints[5] = {};
  for (const Side& side : {Side{"r_", -1.0}, Side{"l_", 1.0}}) {
    const bool actuated = side.sx < 0.0;
    const std::string p = side.prefix;
    const int clav = AddJoint(m, p + "clavicle", spine, {0.03 * side.sx, 0.40, 0.0});
    AddDof(m, clav, p + "clavicle_elevation", side.sx * ez, -0.2, 0.4, actuated);
    AddDof(m, clav, p + "clavicle_protraction", -side.sx * ey, -0.3, 0.4, actuated);
    const int shoulder = AddJoint(m, p + "shoulder", clav, {0.17 * side.sx, 0.0, 0.0});
    AddDof(m, shoulder, p + "shoulder_flexion", -ex, -1.0, 3.0, actuated);
    AddDof(m, shoulder, p + "shoulder_abduction", side.sx * ez, -0.4, 2.8, actuated);
    AddDof(m, shoulder, p + "shoulder_twist", -side.sx * ey, -1.4, 1.4, actuated);
    const int elbow = AddJoint(m, p + "elbow", shoulder, {0.0, -0.30, 0.0});
    AddDof(m, elbow, p + "elbow_flexion", -ex, 0.0, 2.6, actuated);
    const int wrist = AddJoint(m, p + "wrist", elbow, {0.0, -0.27, 0.0});
    AddDof(m, wrist, p + "wrist_flexion", -ex, -1.2, 1.2, actuated);
    AddDof(m, wrist, p + "wrist_deviation", side.sx * ez, -0.5, 0.5, actuated);
    const int tip = AddJoint(m, p + "fingertip", wrist, {0.0, -0.18, 0.0});
    if (actuated) {
      right_joints[0] = tip;
      right_joints[1] = wrist;
      right_joints[2] = elbow;
      right_joints[3] = shoulder;
      right_joints[4] = clav;
    }
  }

  AddCapsule(m, "torso", spine, neck, 0.13);
  AddCapsule(m, "head", neck, head_top, 0.09);
  for (const char* p : {"r_", "l_"}) {
    const std::string s = p;
    auto joint = [&](const std::string& name) {
      for (int j = 0; j < static_cast<int>(m.joints.size()); ++j) {
        if (m.joints[j].name == s + name) return j;
      }
      return -1;
    };
    AddCapsule(m, s + "clavicle", joint("clavicle"), joint("shoulder"), 0.045);
    AddCapsule(m, s + "upper_arm", joint("shoulder"), joint("elbow"), 0.045);
    AddCapsule(m, s + "forearm", joint("elbow"), joint("wrist"), 0.038);
    const int hand = AddCapsule(m, s + "hand", joint("wrist"), joint("fingertip"), 0.03);
    if (s == "r_") m.hand_capsule = hand;
  }

  m.limb_joints = {right_joints[0], right_joints[1], right_joints[2], right_joints[3]};
  m.torso_dofs = {0, 1, 2};
  m.sensors = DistributeSensors(m, kSensorCount);
  m.Validate();
  return m;
}

BodyModel BodyModelFromJson(const nlohmann::json& doc) {
  BodyModel m;
  try {
    for (const auto& j : doc.at("joints")) {
      JointSpec js;
      js.name = j.at("name").get<std::string>();
      js.parent = j.at("parent").get<int>();
      js.offset = JsonVec3(j.at("offset"));
      const int joint_index = static_cast<int>(m.joints.size());
      m.joints.push_back(js);
      for (const auto& d : j.value("dofs", nlohmann::json::array())) {
        AddDof(m, joint_index, d.at("name").get<std::string>(), JsonVec3(d.at("axis")),
               d.at("lower").get<double>(), d.at("upper").get<double>(),
               d.value("actuated", false));
        m.dofs.back().vel_limit = d.value("vel_limit", 4.0);
      }
    }
    for (const auto& c : doc.at("capsules")) {
      m.capsules.push_back({c.at("name").get<std::string>(), c.at("joint_a").get<int>(),
                            c.at("joint_b").get<int>(), c.at("radius").get<double>()});
    }
    m.limb_joints = doc.at("limb_joints").get<std::vector<int>>();
    m.hand_capsule = doc.at("hand_capsule").get<int>();
    m.torso_dofs = doc.at("torso_dofs").get<std::vector<int>>();
    if (doc.contains("actuation")) {
      m.actuation.accel_scale = doc["actuation"].value("accel_scale", m.actuation.accel_scale);
      m.actuation.damping = doc["actuation"].value("damping", m.actuation.damping);
    }
    if (doc.contains("sensors")) {
      for (const auto& s : doc.at("sensors")) {
        m.sensors.push_back({s.at("capsule").get<int>(), s.at("t").get<double>()});
      }
    } else {
      m.sensors = DistributeSensors(m, kSensorCount);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("body description: ") + e.what());
  }
  m.Validate();
  return m;
}

nlohmann::json BodyModelToJson(const BodyModel& m) {
  nlohmann::json doc;
  doc["joints"] = nlohmann::json::array();
  for (const JointSpec& j : m.joints) {
    nlohmann::json jj{{"name", j.name}, {"parent", j.parent}, {"offset", Vec3Json(j.offset)}};
    jj["dofs"] = nlohmann::json::array();
    for (int d : j.dofs) {
      const DofSpec& ds = m.dofs[d];
      jj["dofs"].push_back({{"name", ds.name},
                            {"axis", Vec3Json(ds.axis)},
                            {"lower", ds.lower},
                            {"upper", ds.upper},
                            {"vel_limit", ds.vel_limit},
                            {"actuated", ds.actuated}});
    }
    doc["joints"].push_back(jj);
  }
  doc["capsules"] = nlohmann::json::array();
  for (const CapsuleSpec& c : m.capsules) {
    doc["capsules"].push_back(
        {{"name", c.name}, {"joint_a", c.joint_a}, {"joint_b", c.joint_b}, {"radius", c.radius}});
  }
  doc["sensors"] = nlohmann::json::array();
  for (const SensorSpec& s : m.sensors) doc["sensors"].push_back({{"capsule", s.capsule}, {"t", s.t}});
  doc["limb_joints"] = m.limb_joints;
  doc["hand_capsule"] = m.hand_capsule;
  doc["torso_dofs"] = m.torso_dofs;
  doc["actuation"] = {{"accel_scale", m.actuation.accel_scale}, {"damping", m.actuation.damping}};
  return doc;
}

BodyModel LoadBodyModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open body description '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return BodyModelFromJson(doc);
}

BodyState ForwardKinematics(const BodyModel& model, std::span<const double> q,
                            std::span<const double> qdot) {
  const int nd = model.dof_count();
  if (static_cast<int>(q.size()) != nd) throw UsageError("joint vector has the wrong length");
  for (int i = 0; i < nd; ++i) {
    const DofSpec& d = model.dofs[i];
    if (!(q[i] >= d.lower && q[i] <= d.upper)) {
      throw LimitViolationError("DOF " + std::to_string(i) + " (" + d.name + ") = " +
                                    std::to_string(q[i]) + " outside [" +
                                    std::to_string(d.lower) + ", " + std::to_string(d.upper) + "]",
                                i);
    }
  }

  BodyState s;
  s.q.assign(q.begin(), q.end());
  if (qdot.empty()) {
    s.qdot.assign(nd, 0.0);
  } else {
    s.qdot.assign(qdot.begin(), qdot.end());
  }

  const int nj = static_cast<int>(model.joints.size());
  std::vector<Mat3> rot(nj, Mat3::Identity());
  s.joint_positions.assign(nj, Vec3::Zero());
  for (int j = 0; j < nj; ++j) {
    const JointSpec& js = model.joints[j];
    Mat3 parent_rot = Mat3::Identity();
    if (js.parent >= 0) {
      parent_rot = rot[js.parent];
      s.joint_positions[j] = s.joint_positions[js.parent] + parent_rot * js.offset;
    }
    Mat3 local = Mat3::Identity();
    for (int d : js.dofs) local = local * AxisRotation(model.dofs[d].axis, q[d]);
    rot[j] = parent_rot * local;
  }

  for (int j : model.limb_joints) s.joint_world.push_back(s.joint_positions[j]);
  for (const CapsuleSpec& c : model.capsules) {
    s.capsule_world.push_back({s.joint_positions[c.joint_a], s.joint_positions[c.joint_b], c.radius});
  }
  for (const SensorSpec& sensor : model.sensors) {
    const Capsule& c = s.capsule_world[sensor.capsule];
    s.sensor_world.push_back(c.a + sensor.t * (c.b - c.a));
  }
  return s;
}

BodyState IntegrateAction(const BodyModel& model, const BodyState& state,
                          std::span<const double> action, double dt) {
  const std::vector<int> actuated = model.ActuatedDofs();
  if (action.size() != actuated.size()) {
    throw InvalidActionError("action has " + std::to_string(action.size()) + " entries, expected " +
                             std::to_string(actuated.size()));
  }
  for (std::size_t k = 0; k < action.size(); ++k) {
    if (!std::isfinite(action[k])) {
      throw InvalidActionError("action entry " + std::to_string(k) + " is not finite");
    }
  }

  std::vector<double> q = state.q;
  std::vector<double> qdot(model.dof_count(), 0.0);
  for (std::size_t k = 0; k < actuated.size(); ++k) {
    const int i = actuated[k];
    const DofSpec& d = model.dofs[i];
    const double a = std::clamp(action[k], -1.0, 1.0);
    double v = state.qdot[i] +
               (a * model.actuation.accel_scale - model.actuation.damping * state.qdot[i]) * dt;
    v = std::clamp(v, -d.vel_limit, d.vel_limit);
    const double next = state.q[i] + v * dt;
    if (next > d.upper) {
      q[i] = d.upper;
      v = 0.0;
    } else if (next < d.lower) {
      q[i] = d.lower;
      v = 0.0;
    } else {
      q[i] = next;
    }
    qdot[i] = v;
  }
  return ForwardKinematics(model, q, qdot);
}

std::vector<BoneSegment> BoneSegments(const BodyState& state) {
  std::vector<BoneSegment> bones;
  for (std::size_t i = 1; i < state.joint_world.size(); ++i) {
    bones.push_back({state.joint_world[i], state.joint_world[i - 1]});
  }
  return bones;
}

}  // namespace donning

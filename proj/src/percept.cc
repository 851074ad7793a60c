#include "donning/percept.h"

#include <cmath>
#include <limits>

#include "donning/errors.h"
#include "donning/rewards.h"

namespace donning {

TaskVector ComputeTaskVector(const BodyState& body, const FeatureLoop& feature,
                             const GarmentMesh& mesh, const ClothState& cloth,
                             std::span<const ContactRecord> hand_contacts, int k_int) {
  if (k_int != 0) return {feature.plane_normal, TaskVectorCase::kInsert};
  if (hand_contacts.empty()) {
    const Vec3 toward = feature.plane_point - body.joint_world[0];
    const double len = toward.norm();
    // p_0 exactly at the centroid has no direction; use the insertion normal.
    if (!(len > 0.0)) return {feature.plane_normal, TaskVectorCase::kSeekFeature};
    return {toward / len, TaskVectorCase::kSeekFeature};
  }
  int best = hand_contacts.front().cloth_vertex;
  double g_min = std::numeric_limits<double>::infinity();
  for (const ContactRecord& c : hand_contacts) {
    if (mesh.geodesic[c.cloth_vertex] < g_min) {
      g_min = mesh.geodesic[c.cloth_vertex];
      best = c.cloth_vertex;
    }
  }
  return {GeodesicGradient(mesh, best, cloth.positions), TaskVectorCase::kGeodesicDescent};
}

Observation BuildObservation(const BodyModel& model, const BodyState& body, const GarmentMesh& mesh,
                             const ClothState& cloth, const FeatureLoop& feature, int k_int,
                             const ObservationOptions& options) {
  Observation obs;
  obs.values.reserve(kObservationSize);
  const int nd = model.dof_count();
  for (int i = 0; i < nd; ++i) obs.values.push_back(std::cos(body.q[i]));
  for (int i = 0; i < nd; ++i) obs.values.push_back(std::sin(body.q[i]));
  for (int i = 0; i < nd; ++i) obs.values.push_back(options.qdot_scale * body.qdot[i]);

  const Vec3& c = feature.plane_point;
  const Vec3 offset = body.joint_world[0] - c;
  for (int k = 0; k < 3; ++k) obs.values.push_back(c[k]);
  for (int k = 0; k < 3; ++k) obs.values.push_back(offset[k]);

  const std::vector<Vec3> haptics = BinContacts(cloth.contacts, body);
  const std::vector<int> surface = SurfaceSign(cloth.contacts, mesh, cloth);
  for (const Vec3& f : haptics) {
    for (int k = 0; k < 3; ++k) obs.values.push_back(options.zero_haptics ? 0.0 : f[k]);
  }
  for (int s : surface) obs.values.push_back(options.zero_haptics ? 0.0 : s);

  const std::vector<ContactRecord> hand = EndEffectorContacts(cloth.contacts, model.hand_capsule);
  const TaskVector task = ComputeTaskVector(body, feature, mesh, cloth, hand, k_int);
  obs.task_case = task.which;
  for (int k = 0; k < 3; ++k) obs.values.push_back(options.zero_task ? 0.0 : task.direction[k]);

  if (static_cast<int>(obs.values.size()) != kObservationSize) {
    throw ObservationError("observation has " + std::to_string(obs.values.size()) +
                           " entries, expected 163");
  }
  for (std::size_t i = 0; i < obs.values.size(); ++i) {
    if (!std::isfinite(obs.values[i])) {
      throw ObservationError("observation entry " + std::to_string(i) + " is not finite");
    }
  }
  return obs;
}

}  // namespace donning

#include "donning/rewards.h"

#include <cmath>
#include <limits>

#include "donning/errors.h"

namespace donning {

Containment ComputeContainment(const BodyState& body, const FeatureLoop& feature) {
  if (!feature.fitted) throw UsageError("containment needs a fitted feature plane");
  const std::vector<BoneSegment> bones = BoneSegments(body);
  for (std::size_t i = 0; i < bones.size(); ++i) {
    const BoneSegment& b = bones[i];
    const double t =
        SegmentPlaneParameter(b.proximal, b.distal, feature.plane_point, feature.plane_normal);
    if (t < 0.0) continue;
    const Vec3 r = b.proximal + t * (b.distal - b.proximal);
    if (WindingNumber(feature.polygon2d, feature.ToPlane(r)) != 0) {
      return {static_cast<int>(i) + 1, r};
    }
  }
  return {};
}

Progress ProgressReward(const BodyState& body, const FeatureLoop& feature,
                        const Containment& containment) {
  Progress out;
  out.k_int = containment.k_int;
  if (containment.k_int == 0) {
    out.r_p = -(feature.plane_point - body.joint_world[0]).norm();
    return out;
  }
  const int k = containment.k_int;
  double depth = (body.joint_world[k - 1] - *containment.point).norm();
  for (int i = 1; i < k; ++i) depth += (body.joint_world[i] - body.joint_world[i - 1]).norm();
  out.depth = depth;
  out.r_p = depth;
  return out;
}

Progress ProgressReward(const BodyState& body, const FeatureLoop& feature) {
  return ProgressReward(body, feature, ComputeContainment(body, feature));
}

double DeformationPenaltyFromMax(double max_deformation, const DeformationParams& params) {
  return std::tanh(params.scale * (params.threshold - max_deformation + 2.0)) - 1.0;
}

Deformation DeformationPenalty(const GarmentMesh& mesh, const ClothState& cloth,
                               const DeformationParams& params) {
  Deformation out;
  out.max_deformation = MaxDeformation(mesh, cloth.positions);
  out.r_d = DeformationPenaltyFromMax(out.max_deformation, params);
  return out;
}

std::vector<ContactRecord> EndEffectorContacts(std::span<const ContactRecord> contacts,
                                               int hand_capsule) {
  std::vector<ContactRecord> out;
  for (const ContactRecord& c : contacts) {
    if (c.body_capsule == hand_capsule) out.push_back(c);
  }
  return out;
}

double GeodesicReward(const GarmentMesh& mesh, std::span<const ContactRecord> contacts, int k_int) {
  if (k_int != 0) return 1.0;
  if (contacts.empty()) return 0.0;
  double g_min = std::numeric_limits<double>::infinity();
  for (const ContactRecord& c : contacts) g_min = std::min(g_min, mesh.geodesic[c.cloth_vertex]);
  return 1.0 - g_min;
}

double UprightReward(const BodyModel& model, const BodyState& body) {
  double sum = 0.0;
  for (int d : model.torso_dofs) sum += body.q[d] * body.q[d];
  return -sum;
}

RewardBreakdown TotalReward(double r_p, double r_d, double r_g, double r_u,
                            const RewardWeights& weights) {
  RewardBreakdown out;
  out.r_p = r_p;
  out.r_d = r_d;
  out.r_g = r_g;
  out.r_u = r_u;
  out.total = weights.progress * r_p + weights.deformation * r_d + weights.geodesic * r_g +
              weights.upright * r_u;
  return out;
}

}  // namespace donning

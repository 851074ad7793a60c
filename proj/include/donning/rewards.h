#pragma once

#include <optional>
#include <span>

#include "donning/body.h"
#include "donning/clothsim.h"
#include "donning/garment.h"

namespace donning {

struct RewardWeights {
  double progress = 5.0;     // w_1
  double deformation = 6.0;  // w_2
  double geodesic = 2.0;     // w_3
  double upright = 1.0;
};

struct DeformationParams {
  double threshold = 15.0;  // w_thresh
  double scale = 0.7;       // w_scale
};

struct RewardBreakdown {
  double r_p = 0.0;
  double r_d = 0.0;
  double r_g = 0.0;
  double r_u = 0.0;
  double total = 0.0;
  int k_int = 0;
  double containment_depth = 0.0;
  double max_deformation = 0.0;
};

struct Containment {
  int k_int = 0;                 // 1-based bone index, 0 when no bone crosses the polygon
  std::optional<Vec3> point;     // r = b_{k_int} intersected with the feature plane
};

// Scans bones distal to proximal and reports the first one crossing the
// projected feature polygon.
Containment ComputeContainment(const BodyState& body, const FeatureLoop& feature);

struct Progress {
  double r_p = 0.0;
  int k_int = 0;
  double depth = 0.0;  // inserted limb length, 0 when not contained
};

Progress ProgressReward(const BodyState& body, const FeatureLoop& feature);
Progress ProgressReward(const BodyState& body, const FeatureLoop& feature,
                        const Containment& containment);

double DeformationPenaltyFromMax(double max_deformation, const DeformationParams& params = {});

struct Deformation {
  double r_d = 0.0;
  double max_deformation = 0.0;
};
Deformation DeformationPenalty(const GarmentMesh& mesh, const ClothState& cloth,
                               const DeformationParams& params = {});

// Contacts made by the end-effector (hand) capsule.
std::vector<ContactRecord> EndEffectorContacts(std::span<const ContactRecord> contacts,
                                               int hand_capsule);

// `contacts` must already be restricted to the end effector.
double GeodesicReward(const GarmentMesh& mesh, std::span<const ContactRecord> contacts, int k_int);

double UprightReward(const BodyModel& model, const BodyState& body);

RewardBreakdown TotalReward(double r_p, double r_d, double r_g, double r_u,
                            const RewardWeights& weights = {});

}  // namespace donning

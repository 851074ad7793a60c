#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "donning/body.h"
#include "donning/clothsim.h"
#include "donning/garment.h"

namespace donning {

struct ObservationSegment {
  std::string_view name;
  int offset;
  int length;
};

inline constexpr int kObservationSize = 163;
inline constexpr std::array<ObservationSegment, 5> kObservationLayout = {{
    {"proprio", 0, 66},
    {"feature_loc", 66, 6},
    {"haptics", 72, 66},
    {"surface", 138, 22},
    {"task", 160, 3},
}};

enum class TaskVectorCase {
  kSeekFeature = 1,     // no end-effector contact, not contained: toward the centroid
  kInsert = 2,          // limb contained: along the feature normal
  kGeodesicDescent = 3, // end effector touching cloth: down the geodesic field
};

struct TaskVector {
  Vec3 direction = Vec3::Zero();
  TaskVectorCase which = TaskVectorCase::kSeekFeature;
};

struct ObservationOptions {
  bool zero_haptics = false;  // zeroes both the haptic and surface segments
  bool zero_task = false;
  double qdot_scale = 1.0;
};

struct Observation {
  std::vector<double> values;  // kObservationSize entries in kObservationLayout order
  TaskVectorCase task_case = TaskVectorCase::kSeekFeature;

  std::span<const double> segment(int index) const {
    const auto& s = kObservationLayout[index];
    return std::span<const double>(values).subspan(s.offset, s.length);
  }
};

// `hand_contacts` are the end-effector contacts, `contacts` all contacts of
// the most recent cloth step.
TaskVector ComputeTaskVector(const BodyState& body, const FeatureLoop& feature,
                             const GarmentMesh& mesh, const ClothState& cloth,
                             std::span<const ContactRecord> hand_contacts, int k_int);

Observation BuildObservation(const BodyModel& model, const BodyState& body, const GarmentMesh& mesh,
                             const ClothState& cloth, const FeatureLoop& feature, int k_int,
                             const ObservationOptions& options = {});

}  // namespace donning

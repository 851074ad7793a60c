#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "donning/body.h"
#include "donning/garment.h"

namespace donning {

struct ClothParams {
  int iterations = 10;
  double stretch_stiffness = 1.0;
  double bend_stiffness = 0.2;  // 0 disables bending constraints
  double total_mass = 0.3;      // kg, split evenly over vertices
  double thickness = 0.005;     // m, kept between cloth and capsule surfaces
  double gravity = 9.81;        // m/s^2 along -y
  // Fraction of each vertex's deviation from the mean velocity removed per
  // step. Leaves total momentum untouched.
  double damping = 0.02;
  // Coulomb coefficients for cloth sliding on the body. Slip below
  // static_friction times the normal push-out is cancelled; larger slip is
  // reduced by friction times the push-out.
  double static_friction = 0.5;
  double friction = 0.3;
  // Tethers keep each vertex within this multiple of its rest graph
  // distance from the nearest pin; 0 disables them.
  double tether_scale = 1.0;
  // Edge lengths outside (1 +- strain_limit) * rest are clamped back after
  // the constraint iterations; 0 disables the pass.
  double strain_limit = 0.08;
  int strain_limit_passes = 50;
};

struct ContactRecord {
  int cloth_vertex = 0;
  Vec3 point = Vec3::Zero();  // on the capsule surface
  Vec3 force = Vec3::Zero();  // on the cloth, N
  int body_capsule = 0;
  int sensor_bin = 0;
};

struct Pin {
  int vertex = 0;
  Vec3 target = Vec3::Zero();
};

// Long-range attachment of a free vertex to a pin (index into pins).
struct Tether {
  int vertex = 0;
  int pin = 0;
  double length = 0.0;  // rest edge-graph distance
};

struct ClothState {
  std::vector<Vec3> positions;
  std::vector<Vec3> prev_positions;
  std::vector<Vec3> velocities;
  std::vector<Pin> pins;
  std::vector<Tether> tethers;
  // Constraint projection order (indices into mesh edges / bend pairs);
  // empty means mesh order.
  std::vector<int> edge_order;
  std::vector<int> bend_order;
  std::vector<ContactRecord> contacts;  // from the most recent step
};

// Cloth at the garment rest shape, at rest, with no pins.
ClothState MakeClothState(const GarmentMesh& mesh);

// Rebuilds the tethers for the current pin set.
void AttachTethers(const GarmentMesh& mesh, ClothState& cloth);

double VertexMass(const GarmentMesh& mesh, const ClothParams& params);

// One position-based-dynamics step of length dt. `pin_targets[k]` is the
// world target of `cloth.pins[k]`; pass an empty span to keep the current
// targets. Throws SolverDivergenceError on non-finite positions.
ClothState StepCloth(const GarmentMesh& mesh, const ClothState& cloth, const BodyState& body,
                     std::span<const Vec3> pin_targets, double dt, const ClothParams& params);

// Index of the sensor closest to `point` (lowest index on ties).
int NearestSensor(const BodyState& body, const Vec3& point);

// Sum of contact forces per haptic sensor.
std::vector<Vec3> BinContacts(std::span<const ContactRecord> contacts, const BodyState& body);

// Per sensor sign of sum(force . outward vertex normal): +1 inner surface
// contact, -1 outer surface contact, 0 for no contact or an exact zero.
// Contacts are grouped by their recorded sensor_bin.
std::vector<int> SurfaceSign(std::span<const ContactRecord> contacts, const GarmentMesh& mesh,
                             const ClothState& cloth);

// Binary snapshot file: "DNFR" magic, uint32 vertex count, uint32 frame
// count, then frame_count * vertex_count little-endian float32 xyz triplets.
class FrameWriter {
 public:
  FrameWriter(const std::string& path, std::uint32_t vertex_count);
  ~FrameWriter();
  FrameWriter(const FrameWriter&) = delete;
  FrameWriter& operator=(const FrameWriter&) = delete;

  void Append(std::span<const Vec3> positions);
  // Patches the frame count into the header and closes the file.
  void Close();
  std::uint32_t frame_count() const { return frames_; }

 private:
  std::ofstream out_;
  std::uint32_t vertex_count_;
  std::uint32_t frames_ = 0;
};

struct FrameFile {
  std::uint32_t vertex_count = 0;
  std::vector<std::vector<std::array<float, 3>>> frames;
};
FrameFile ReadFrames(const std::string& path);

}  // namespace donning

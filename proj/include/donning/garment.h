#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "donning/math.h"

namespace donning {

using Triangle = std::array<int, 3>;

// A closed loop of garment vertices (e.g. a sleeve opening) together with
// its best-fit plane. The plane fields are only meaningful once `fitted`.
struct FeatureLoop {
  std::vector<int> vertex_indices;

  bool fitted = false;
  Vec3 plane_point = Vec3::Zero();   // centroid c of the loop
  Vec3 plane_normal = Vec3::UnitZ(); // unit, points from the loop into the garment
  Vec3 basis_u = Vec3::UnitX();      // orthonormal in-plane axes
  Vec3 basis_v = Vec3::UnitY();
  std::vector<Vec2> polygon2d;       // loop vertices in (basis_u, basis_v) coordinates

  Vec2 ToPlane(const Vec3& p) const {
    const Vec3 d = p - plane_point;
    return {d.dot(basis_u), d.dot(basis_v)};
  }
};

// Triangle-mesh garment. Built once through MakeGarmentMesh and then treated
// as immutable; it is safe to share between rollout workers.
struct GarmentMesh {
  std::vector<Vec3> vertices;        // rest positions, meters
  std::vector<Triangle> triangles;
  std::vector<double> rest_areas;    // per triangle, m^2, strictly positive
  std::vector<FeatureLoop> features; // fitted at rest
  int active_feature = 0;
  std::vector<int> pins;             // vertices grasped by the gripper
  std::vector<double> geodesic;      // per vertex in [0, 1], 0 on the active loop

  // Derived topology.
  std::vector<std::array<int, 2>> edges;       // unique, i < j
  std::vector<std::array<int, 2>> bend_pairs;  // opposite vertices across interior edges
  std::vector<double> edge_rest;               // rest lengths, parallel to `edges`
  std::vector<double> bend_rest;               // rest lengths, parallel to `bend_pairs`
  std::vector<std::vector<int>> vertex_triangles;
  std::vector<std::vector<int>> neighbors;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  const FeatureLoop& active() const { return features.at(active_feature); }
  bool HasEdge(int a, int b) const;
};

// Validates the input and builds all derived data: rest areas, topology,
// fitted feature planes and the geodesic field of the active loop. When
// `pins` is empty the four loop vertices with the largest rest y are used.
GarmentMesh MakeGarmentMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
                            const std::vector<std::vector<int>>& loops, int active_loop,
                            std::vector<int> pins = {});

FeatureLoop FitFeaturePlane(const GarmentMesh& mesh, const FeatureLoop& loop,
                            std::span<const Vec3> positions);
FeatureLoop FitFeaturePlane(const GarmentMesh& mesh, const FeatureLoop& loop);

// d_i = current area / rest area for every triangle.
std::vector<double> TriangleDeformation(const GarmentMesh& mesh,
                                        std::span<const Vec3> positions);
double MaxDeformation(const GarmentMesh& mesh, std::span<const Vec3> positions);

// Multi-source shortest paths over the edge graph (edge weight = rest
// Euclidean length). Unreached vertices are +infinity.
std::vector<double> EdgeGraphDistances(const GarmentMesh& mesh, std::span<const int> sources);

GarmentMesh BuildGeodesicField(GarmentMesh mesh, const FeatureLoop& feature);

// Unit direction of steepest descent of the piecewise-linear geodesic field
// at a vertex, evaluated on the given (possibly deformed) positions.
Vec3 GeodesicGradient(const GarmentMesh& mesh, int vertex, std::span<const Vec3> positions);
Vec3 GeodesicGradient(const GarmentMesh& mesh, int vertex);

// Area-weighted vertex normals; orientation follows the triangle winding.
std::vector<Vec3> VertexNormals(const GarmentMesh& mesh, std::span<const Vec3> positions);

// Winding number of a closed polygon around `p`; nonzero means inside.
int WindingNumber(std::span<const Vec2> polygon, const Vec2& p);

// Intersection parameter t in [0, 1] of segment a->b with the plane, or a
// negative value when the segment misses or lies parallel to the plane.
double SegmentPlaneParameter(const Vec3& a, const Vec3& b, const Vec3& plane_point,
                             const Vec3& plane_normal);

bool PolygonSelfIntersects(std::span<const Vec2> polygon);

struct SleeveParams {
  int rings = 20;
  int segments = 16;
  double radius = 0.07;
  double length = 0.45;
  // Optional flared panel continuing the top half of the far rim, a stand-in
  // for the gown body that the sleeve is sewn onto.
  int panel_rows = 0;
  double panel_spread = 0.05;
  double panel_step = 0.03;
};

// Open tube along +z with the feature loop on the z = 0 rim. Ring vertices
// are offset by half a segment so the top seam falls between two vertices.
GarmentMesh MakeSleeve(const SleeveParams& params = {});

}  // namespace donning

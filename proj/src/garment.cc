#include "donning/garment.h"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "donning/errors.h"

namespace donning {
namespace {

std::uint64_t EdgeKey(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

void BuildTopology(GarmentMesh& mesh) {
  const int n = mesh.vertex_count();
  mesh.vertex_triangles.assign(n, {});
  mesh.neighbors.assign(n, {});
  // Edge key -> vertices opposite to that edge in its incident triangles.
  std::map<std::uint64_t, std::vector<int>> opposite;
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const Triangle& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      mesh.vertex_triangles[tri[k]].push_back(t);
      opposite[EdgeKey(tri[k], tri[(k + 1) % 3])].push_back(tri[(k + 2) % 3]);
    }
  }
  mesh.edges.clear();
  mesh.bend_pairs.clear();
  for (const auto& [key, opp] : opposite) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    mesh.edges.push_back({a, b});
    mesh.neighbors[a].push_back(b);
    mesh.neighbors[b].push_back(a);
    if (opp.size() == 2 && opp[0] != opp[1]) {
      mesh.bend_pairs.push_back({std::min(opp[0], opp[1]), std::max(opp[0], opp[1])});
    }
  }
  for (auto& nb : mesh.neighbors) std::sort(nb.begin(), nb.end());
  mesh.edge_rest.clear();
  for (const auto& [a, b] : mesh.edges) {
    mesh.edge_rest.push_back((mesh.vertices[a] - mesh.vertices[b]).norm());
  }
  mesh.bend_rest.clear();
  for (const auto& [a, b] : mesh.bend_pairs) {
    mesh.bend_rest.push_back((mesh.vertices[a] - mesh.vertices[b]).norm());
  }
}

void ValidateLoop(const GarmentMesh& mesh, const std::vector<int>& loop) {
  if (loop.size() < 3) throw TopologyError("feature loop needs at least 3 vertices");
  std::set<int> seen;
  for (int v : loop) {
    if (v < 0 || v >= mesh.vertex_count()) {
      throw TopologyError("feature loop vertex " + std::to_string(v) + " out of range");
    }
    if (!seen.insert(v).second) {
      throw TopologyError("feature loop repeats vertex " + std::to_string(v));
    }
  }
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const int a = loop[i];
    const int b = loop[(i + 1) % loop.size()];
    if (!mesh.HasEdge(a, b)) {
      throw TopologyError("feature loop is not closed along mesh edges between " +
                          std::to_string(a) + " and " + std::to_string(b));
    }
  }
}

}  // namespace

bool GarmentMesh::HasEdge(int a, int b) const {
  if (a < 0 || a >= vertex_count()) return false;
  const auto& nb = neighbors[a];
  return std::binary_search(nb.begin(), nb.end(), b);
}

GarmentMesh MakeGarmentMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
                            const std::vector<std::vector<int>>& loops, int active_loop,
                            std::vector<int> pins) {
  GarmentMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  const int n = mesh.vertex_count();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    for (int v : tri) {
      if (v < 0 || v >= n) {
        throw TopologyError("triangle " + std::to_string(t) + " references vertex " +
                            std::to_string(v) + " outside [0, " + std::to_string(n) + ")");
      }
    }
    const double area =
        TriangleArea(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    if (!(area > 0.0)) {
      throw DegenerateGeometryError("triangle " + std::to_string(t) + " has zero rest area");
    }
    mesh.rest_areas.push_back(area);
  }
  BuildTopology(mesh);

  if (loops.empty()) throw TopologyError("garment has no feature loops");
  if (active_loop < 0 || active_loop >= static_cast<int>(loops.size())) {
    throw TopologyError("active feature index " + std::to_string(active_loop) + " out of range");
  }
  for (const auto& loop : loops) {
    ValidateLoop(mesh, loop);
    FeatureLoop feature;
    feature.vertex_indices = loop;
    feature = FitFeaturePlane(mesh, feature);
    if (PolygonSelfIntersects(feature.polygon2d)) {
      throw DegenerateGeometryError("projected feature polygon self-intersects");
    }
    mesh.features.push_back(std::move(feature));
  }
  mesh.active_feature = active_loop;

  if (pins.empty()) {
    std::vector<int> candidates = mesh.active().vertex_indices;
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
      return mesh.vertices[a].y() > mesh.vertices[b].y();
    });
    candidates.resize(std::min<std::size_t>(4, candidates.size()));
    std::sort(candidates.begin(), candidates.end());
    pins = std::move(candidates);
  }
  for (int p : pins) {
    if (p < 0 || p >= n) throw TopologyError("pin vertex " + std::to_string(p) + " out of range");
  }
  mesh.pins = std::move(pins);

  const FeatureLoop active = mesh.active();
  return BuildGeodesicField(std::move(mesh), active);
}

FeatureLoop FitFeaturePlane(const GarmentMesh& mesh, const FeatureLoop& loop,
                            std::span<const Vec3> positions) {
  const auto& idx = loop.vertex_indices;
  if (idx.size() < 3) throw DegenerateGeometryError("feature loop has fewer than 3 vertices");
  if (static_cast<int>(positions.size()) != mesh.vertex_count()) {
    throw UsageError("position count does not match the garment vertex count");
  }

  Vec3 mean = Vec3::Zero();
  for (int v : idx) mean += positions[v];
  mean /= static_cast<double>(idx.size());

  Mat3 cov = Mat3::Zero();
  for (int v : idx) {
    const Vec3 d = positions[v] - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Eigen::Vector3d lambda = eig.eigenvalues();  // ascending
  const double scale = std::max(lambda(2), 0.0);
  if (!(scale > 0.0) || lambda(1) <= 1e-12 * scale) {
    throw DegenerateGeometryError("feature loop vertices are collinear or coincident");
  }

  FeatureLoop out = loop;
  out.plane_point = mean;
  Vec3 normal = eig.eigenvectors().col(0).normalized();

  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : positions) centroid += p;
  centroid /= static_cast<double>(positions.size());
  const double side = (centroid - mean).dot(normal);
  if (side < 0.0) {
    normal = -normal;
  } else if (side == 0.0) {
    // Garment centroid on the plane: fall back to a fixed sign convention.
    int k = 0;
    normal.cwiseAbs().maxCoeff(&k);
    if (normal(k) < 0.0) normal = -normal;
  }
  out.plane_normal = normal;
  Vec3 u = eig.eigenvectors().col(2);
  u = (u - u.dot(normal) * normal).normalized();
  out.basis_u = u;
  out.basis_v = normal.cross(u);

  out.polygon2d.clear();
  out.polygon2d.reserve(idx.size());
  for (int v : idx) out.polygon2d.push_back(out.ToPlane(positions[v]));
  out.fitted = true;
  return out;
}

FeatureLoop FitFeaturePlane(const GarmentMesh& mesh, const FeatureLoop& loop) {
  return FitFeaturePlane(mesh, loop, mesh.vertices);
}

std::vector<double> TriangleDeformation(const GarmentMesh& mesh,
                                        std::span<const Vec3> positions) {
  std::vector<double> d(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    d[t] = TriangleArea(positions[tri[0]], positions[tri[1]], positions[tri[2]]) /
           mesh.rest_areas[t];
  }
  return d;
}

double MaxDeformation(const GarmentMesh& mesh, std::span<const Vec3> positions) {
  double best = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    best = std::max(best, TriangleArea(positions[tri[0]], positions[tri[1]], positions[tri[2]]) /
                              mesh.rest_areas[t]);
  }
  return best;
}

std::vector<double> EdgeGraphDistances(const GarmentMesh& mesh, std::span<const int> sources) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(mesh.vertex_count(), inf);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  for (int s : sources) {
    dist[s] = 0.0;
    queue.push({0.0, s});
  }
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (int w : mesh.neighbors[v]) {
      const double nd = d + (mesh.vertices[v] - mesh.vertices[w]).norm();
      if (nd < dist[w]) {
        dist[w] = nd;
        queue.push({nd, w});
      }
    }
  }
  return dist;
}

GarmentMesh BuildGeodesicField(GarmentMesh mesh, const FeatureLoop& feature) {
  std::vector<double> dist = EdgeGraphDistances(mesh, feature.vertex_indices);
  std::vector<int> unreached;
  double max_dist = 0.0;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    if (std::isinf(dist[v])) {
      unreached.push_back(v);
    } else {
      max_dist = std::max(max_dist, dist[v]);
    }
  }
  if (!unreached.empty()) {
    std::ostringstream msg;
    msg << unreached.size() << " garment vertices unreachable from the feature loop:";
    for (std::size_t i = 0; i < unreached.size() && i < 16; ++i) msg << ' ' << unreached[i];
    if (unreached.size() > 16) msg << " ...";
    throw UnreachableVertexError(msg.str(), std::move(unreached));
  }
  if (max_dist > 0.0) {
    for (double& d : dist) d /= max_dist;
  }
  mesh.geodesic = std::move(dist);
  return mesh;
}

Vec3 GeodesicGradient(const GarmentMesh& mesh, int vertex, std::span<const Vec3> positions) {
  if (vertex < 0 || vertex >= mesh.vertex_count() || mesh.vertex_triangles[vertex].empty()) {
    throw TopologyError("vertex " + std::to_string(vertex) + " has no incident triangle");
  }
  Vec3 weighted = Vec3::Zero();
  double total_area = 0.0;
  for (int t : mesh.vertex_triangles[vertex]) {
    const Triangle& tri = mesh.triangles[t];
    const Vec3& x0 = positions[tri[0]];
    const Vec3& x1 = positions[tri[1]];
    const Vec3& x2 = positions[tri[2]];
    const Vec3 n = (x1 - x0).cross(x2 - x0);
    const double twice_area = n.norm();
    if (twice_area <= 0.0) continue;
    const Vec3 unit = n / twice_area;
    const Vec3 grad = (mesh.geodesic[tri[0]] * unit.cross(x2 - x1) +
                       mesh.geodesic[tri[1]] * unit.cross(x0 - x2) +
                       mesh.geodesic[tri[2]] * unit.cross(x1 - x0)) /
                      twice_area;
    weighted += 0.5 * twice_area * grad;
    total_area += 0.5 * twice_area;
  }
  if (total_area > 0.0) {
    const Vec3 descent = -weighted / total_area;
    const double len = descent.norm();
    if (len > 1e-12) return descent / len;
  }
  Vec3 centroid = Vec3::Zero();
  for (int v : mesh.active().vertex_indices) centroid += positions[v];
  centroid /= static_cast<double>(mesh.active().vertex_indices.size());
  const Vec3 toward = centroid - positions[vertex];
  if (toward.norm() > 1e-12) return toward.normalized();
  return mesh.active().plane_normal;
}

Vec3 GeodesicGradient(const GarmentMesh& mesh, int vertex) {
  return GeodesicGradient(mesh, vertex, mesh.vertices);
}

std::vector<Vec3> VertexNormals(const GarmentMesh& mesh, std::span<const Vec3> positions) {
  std::vector<Vec3> normals(mesh.vertex_count(), Vec3::Zero());
  for (const Triangle& tri : mesh.triangles) {
    // Cross product magnitude is twice the area, giving area weighting.
    const Vec3 n = (positions[tri[1]] - positions[tri[0]]).cross(positions[tri[2]] - positions[tri[0]]);
    for (int v : tri) normals[v] += n;
  }
  for (Vec3& n : normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return normals;
}

int WindingNumber(std::span<const Vec2> polygon, const Vec2& p) {
  int winding = 0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[(i + 1) % n];
    const double side = (b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y());
    if (a.y() <= p.y()) {
      if (b.y() > p.y() && side > 0.0) ++winding;
    } else {
      if (b.y() <= p.y() && side < 0.0) --winding;
    }
  }
  return winding;
}

double SegmentPlaneParameter(const Vec3& a, const Vec3& b, const Vec3& plane_point,
                             const Vec3& plane_normal) {
  const double da = (a - plane_point).dot(plane_normal);
  const double db = (b - plane_point).dot(plane_normal);
  if ((da > 0.0 && db > 0.0) || (da < 0.0 && db < 0.0)) return -1.0;
  const double denom = da - db;
  if (denom == 0.0) return -1.0;  // parallel, including lying in the plane
  return da / denom;
}

bool PolygonSelfIntersects(std::span<const Vec2> polygon) {
  const std::size_t n = polygon.size();
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      // Skip edges sharing an endpoint.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      const Vec2& c = polygon[j];
      const Vec2& d = polygon[(j + 1) % n];
      const double d1 = cross(c, d, a);
      const double d2 = cross(c, d, b);
      const double d3 = cross(a, b, c);
      const double d4 = cross(a, b, d);
      if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
        return true;
      }
    }
  }
  return false;
}

GarmentMesh MakeSleeve(const SleeveParams& params) {
  if (params.rings < 2 || params.segments < 3 || !(params.radius > 0.0) ||
      !(params.length > 0.0) || params.panel_rows < 0) {
    throw ConfigError("invalid procedural sleeve parameters");
  }
  const int rings = params.rings;
  const int segs = params.segments;
  const double pi = 3.14159265358979323846;
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  auto ring_vertex = [segs](int ring, int k) { return ring * segs + ((k % segs) + segs) % segs; };
  auto angle = [&](int k) { return 2.0 * pi * (k + 0.5) / segs; };

  for (int j = 0; j < rings; ++j) {
    const double z = params.length * j / (rings - 1);
    for (int k = 0; k < segs; ++k) {
      vertices.emplace_back(params.radius * std::cos(angle(k)), params.radius * std::sin(angle(k)), z);
    }
  }
  for (int j = 0; j + 1 < rings; ++j) {
    for (int k = 0; k < segs; ++k) {
      const int a = ring_vertex(j, k);
      const int b = ring_vertex(j, k + 1);
      const int c = ring_vertex(j + 1, k);
      const int d = ring_vertex(j + 1, k + 1);
      triangles.push_back({a, b, c});
      triangles.push_back({b, d, c});
    }
  }

  if (params.panel_rows > 0) {
    // Columns follow the upper half of the far ring (sin(angle) > 0).
    std::vector<int> columns;
    for (int k = 0; k < segs; ++k) {
      if (std::sin(angle(k)) > 0.0) columns.push_back(k);
    }
    std::vector<int> previous;
    for (int k : columns) previous.push_back(ring_vertex(rings - 1, k));
    for (int r = 1; r <= params.panel_rows; ++r) {
      const double radius = params.radius + r * params.panel_spread;
      const double z = params.length + r * params.panel_step;
      std::vector<int> row;
      for (int k : columns) {
        row.push_back(static_cast<int>(vertices.size()));
        vertices.emplace_back(radius * std::cos(angle(k)), radius * std::sin(angle(k)), z);
      }
      for (std::size_t c = 0; c + 1 < columns.size(); ++c) {
        triangles.push_back({previous[c], previous[c + 1], row[c]});
        triangles.push_back({previous[c + 1], row[c + 1], row[c]});
      }
      previous = std::move(row);
    }
  }

  std::vector<int> rim(segs);
  std::iota(rim.begin(), rim.end(), 0);
  return MakeGarmentMesh(std::move(vertices), std::move(triangles), {rim}, 0);
}

}  // namespace donning

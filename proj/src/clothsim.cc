#include "donning/clothsim.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "donning/errors.h"

namespace donning {
namespace {

struct CapsuleBounds {
  Vec3 lo;
  Vec3 hi;
  double reach;  // radius + thickness
};

// Pushes `p` out to `reach` from the capsule axis. Returns the applied
// displacement (zero when already outside).
Vec3 PushOut(const Capsule& c, double reach, const Vec3& hint, Vec3& p) {
  const Vec3 q = ClosestPointOnSegment(c.a, c.b, p);
  Vec3 d = p - q;
  const double dist2 = d.squaredNorm();
  if (dist2 >= reach * reach) return Vec3::Zero();
  if (std::sqrt(dist2) < 1e-12) {
    // On the axis: leave along the direction the vertex came from, or any
    // direction perpendicular to the axis.
    d = hint - q;
    const Vec3 axis = (c.b - c.a).normalized();
    d -= d.dot(axis) * axis;
    if (d.norm() < 1e-12) d = axis.unitOrthogonal();
  }
  const Vec3 n = d.normalized();
  const Vec3 target = q + reach * n;
  const Vec3 delta = target - p;
  p = target;
  return delta;
}

void WriteU32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t ReadU32(std::ifstream& in) {
  unsigned char b[4] = {};
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr char kFrameMagic[4] = {'D', 'N', 'F', 'R'};

}  // namespace

ClothState MakeClothState(const GarmentMesh& mesh) {
  ClothState s;
  s.positions = mesh.vertices;
  s.prev_positions = mesh.vertices;
  s.velocities.assign(mesh.vertices.size(), Vec3::Zero());
  return s;
}

void AttachTethers(const GarmentMesh& mesh, ClothState& cloth) {
  cloth.tethers.clear();
  if (cloth.pins.empty()) return;
  std::vector<std::vector<double>> dist;
  for (const Pin& pin : cloth.pins) {
    const int source[1] = {pin.vertex};
    dist.push_back(EdgeGraphDistances(mesh, source));
  }
  std::vector<char> pinned(mesh.vertex_count(), 0);
  for (const Pin& pin : cloth.pins) pinned[pin.vertex] = 1;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    if (pinned[v]) continue;
    int best = -1;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      if (std::isfinite(dist[k][v]) && (best < 0 || dist[k][v] < dist[best][v])) {
        best = static_cast<int>(k);
      }
    }
    if (best >= 0) cloth.tethers.push_back({v, best, dist[best][v]});
  }
  // Sweep constraints outward from the grasp so each Gauss-Seidel pass
  // carries the load down the garment.
  std::vector<double> near(mesh.vertex_count(), std::numeric_limits<double>::infinity());
  for (const auto& d : dist) {
    for (int v = 0; v < mesh.vertex_count(); ++v) near[v] = std::min(near[v], d[v]);
  }
  auto order_by = [&](const std::vector<std::array<int, 2>>& pairs) {
    std::vector<int> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      return std::min(near[pairs[x][0]], near[pairs[x][1]]) <
             std::min(near[pairs[y][0]], near[pairs[y][1]]);
    });
    return order;
  };
  cloth.edge_order = order_by(mesh.edges);
  cloth.bend_order = order_by(mesh.bend_pairs);
}

double VertexMass(const GarmentMesh& mesh, const ClothParams& params) {
  return params.total_mass / static_cast<double>(mesh.vertex_count());
}

ClothState StepCloth(const GarmentMesh& mesh, const ClothState& cloth, const BodyState& body,
                     std::span<const Vec3> pin_targets, double dt, const ClothParams& params) {
  const int n = mesh.vertex_count();
  if (!pin_targets.empty() && pin_targets.size() != cloth.pins.size()) {
    throw UsageError("pin target count does not match the pin set");
  }
  const Vec3 accel(0.0, -params.gravity, 0.0);

  ClothState next;
  next.pins = cloth.pins;
  next.tethers = cloth.tethers;
  next.edge_order = cloth.edge_order;
  next.bend_order = cloth.bend_order;
  for (std::size_t k = 0; k < pin_targets.size(); ++k) next.pins[k].target = pin_targets[k];
  next.prev_positions = cloth.positions;

  std::vector<double> inv_mass(n, 1.0);
  std::vector<Vec3> pred(n);
  for (int i = 0; i < n; ++i) {
    pred[i] = cloth.positions[i] + cloth.velocities[i] * dt + 0.5 * dt * dt * accel;
  }
  for (const Pin& pin : next.pins) {
    inv_mass[pin.vertex] = 0.0;
    pred[pin.vertex] = pin.target;
  }

  const auto& capsules = body.capsule_world;
  const int nc = static_cast<int>(capsules.size());
  std::vector<CapsuleBounds> bounds(nc);
  for (int c = 0; c < nc; ++c) {
    const double reach = capsules[c].radius + params.thickness;
    bounds[c] = {capsules[c].a.cwiseMin(capsules[c].b).array() - reach,
                 capsules[c].a.cwiseMax(capsules[c].b).array() + reach, reach};
  }
  // Accumulated body-on-cloth correction per (vertex, capsule).
  std::vector<Vec3> correction(static_cast<std::size_t>(n) * nc, Vec3::Zero());
  std::vector<char> touched(static_cast<std::size_t>(n) * nc, 0);

  auto collide = [&](int i) {
    if (inv_mass[i] == 0.0) return false;
    bool hit = false;
    for (int c = 0; c < nc; ++c) {
      const Vec3& p = pred[i];
      if ((p.array() < bounds[c].lo.array()).any() || (p.array() > bounds[c].hi.array()).any()) {
        continue;
      }
      const Vec3 delta = PushOut(capsules[c], bounds[c].reach, cloth.positions[i], pred[i]);
      if (delta.squaredNorm() > 0.0) {
        const std::size_t slot = static_cast<std::size_t>(i) * nc + c;
        correction[slot] += delta;
        touched[slot] = 1;
        hit = true;
      }
    }
    return hit;
  };

  auto project = [&](const auto& pairs, const std::vector<double>& rest, double stiffness,
                     const std::vector<int>& order) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const std::size_t e = order.empty() ? k : static_cast<std::size_t>(order[k]);
      const int a = pairs[e][0];
      const int b = pairs[e][1];
      const double wsum = inv_mass[a] + inv_mass[b];
      if (wsum == 0.0) continue;
      const Vec3 d = pred[a] - pred[b];
      const double len = d.norm();
      if (len < 1e-12) continue;
      const Vec3 corr = (stiffness * (len - rest[e]) / (len * wsum)) * d;
      pred[a] -= inv_mass[a] * corr;
      pred[b] += inv_mass[b] * corr;
    }
  };

  for (int it = 0; it < params.iterations; ++it) {
    project(mesh.edges, mesh.edge_rest, params.stretch_stiffness, cloth.edge_order);
    if (params.bend_stiffness > 0.0) {
      project(mesh.bend_pairs, mesh.bend_rest, params.bend_stiffness, cloth.bend_order);
    }
    if (params.tether_scale > 0.0) {
      for (const Tether& t : next.tethers) {
        const Vec3& anchor = pred[next.pins[t.pin].vertex];
        const Vec3 d = pred[t.vertex] - anchor;
        const double len = d.norm();
        const double limit = params.tether_scale * t.length;
        if (len > limit) pred[t.vertex] = anchor + (limit / len) * d;
      }
    }
    if (nc > 0) {
      for (int i = 0; i < n; ++i) collide(i);
    }
  }

  if (nc > 0) {
    // Separation and friction on vertices in contact. Repeated a few times
    // so overlapping capsules (at joints) cannot trap a vertex.
    for (int i = 0; i < n; ++i) {
      if (inv_mass[i] == 0.0) continue;
      bool in_contact = false;
      for (int c = 0; c < nc; ++c) in_contact |= touched[static_cast<std::size_t>(i) * nc + c] != 0;
      for (int pass = 0; pass < 4 && collide(i); ++pass) in_contact = true;
      if (in_contact && (params.friction > 0.0 || params.static_friction > 0.0)) {
        // Tangential slip relative to the closest touched capsule surface.
        int best = -1;
        double best_dist = 0.0;
        for (int c = 0; c < nc; ++c) {
          if (!touched[static_cast<std::size_t>(i) * nc + c]) continue;
          const double dist =
              (pred[i] - ClosestPointOnSegment(capsules[c].a, capsules[c].b, pred[i])).norm() -
              capsules[c].radius;
          if (best < 0 || dist < best_dist) {
            best = c;
            best_dist = dist;
          }
        }
        const Vec3 q = ClosestPointOnSegment(capsules[best].a, capsules[best].b, pred[i]);
        const Vec3 normal = (pred[i] - q).normalized();
        const Vec3 slip = pred[i] - cloth.positions[i];
        const Vec3 tangential = slip - slip.dot(normal) * normal;
        // Coulomb friction on positions: the accumulated normal push-out
        // stands in for the normal impulse.
        const std::size_t slot = static_cast<std::size_t>(i) * nc + best;
        const double pushed = std::max(0.0, correction[slot].dot(normal));
        const double t = tangential.norm();
        Vec3 delta = Vec3::Zero();
        if (t <= params.static_friction * pushed) {
          delta = -tangential;
        } else if (t > 0.0) {
          delta = -tangential * std::min(params.friction * pushed / t, 1.0);
        }
        pred[i] += delta;
        correction[slot] += delta;
        // Friction is tangential, but re-check the surface anyway.
        collide(i);
      }
    }
  }

  if (params.strain_limit > 0.0) {
    // Strain limiting: edges outside the band are moved back to its edge,
    // sweeping outward from the grasp.
    std::vector<char> moved(n, 0);
    for (int pass = 0; pass < params.strain_limit_passes; ++pass) {
      bool changed = false;
      for (std::size_t k = 0; k < mesh.edges.size(); ++k) {
        const std::size_t e = cloth.edge_order.empty() ? k : cloth.edge_order[k];
        const int a = mesh.edges[e][0];
        const int b = mesh.edges[e][1];
        const double wsum = inv_mass[a] + inv_mass[b];
        if (wsum == 0.0) continue;
        const Vec3 d = pred[a] - pred[b];
        const double len = d.norm();
        const double hi = (1.0 + params.strain_limit) * mesh.edge_rest[e];
        const double lo = (1.0 - params.strain_limit) * mesh.edge_rest[e];
        if (len <= hi && len >= lo) continue;
        if (len < 1e-12) continue;
        const double limit = len > hi ? hi : lo;
        const Vec3 corr = ((len - limit) / (len * wsum)) * d;
        pred[a] -= inv_mass[a] * corr;
        pred[b] += inv_mass[b] * corr;
        moved[a] = moved[b] = 1;
        changed = true;
      }
      if (!changed) break;
      if (nc > 0) {
        for (int i = 0; i < n; ++i) {
          if (moved[i]) collide(i);
          moved[i] = 0;
        }
      }
    }
  }

  if (nc > 0) {
    for (int i = 0; i < n; ++i) {
      for (int pass = 0; pass < 4 && collide(i); ++pass) {
      }
    }
  }

  next.positions = pred;
  next.velocities.resize(n);
  Vec3 mean_v = Vec3::Zero();
  int free_count = 0;
  for (int i = 0; i < n; ++i) {
    next.velocities[i] = (pred[i] - cloth.positions[i]) / dt;
    if (inv_mass[i] != 0.0) {
      next.velocities[i] += 0.5 * dt * accel;
      mean_v += next.velocities[i];
      ++free_count;
    }
  }
  if (params.damping > 0.0 && free_count > 0) {
    mean_v /= free_count;
    for (int i = 0; i < n; ++i) {
      if (inv_mass[i] != 0.0) next.velocities[i] -= params.damping * (next.velocities[i] - mean_v);
    }
  }

  for (int i = 0; i < n; ++i) {
    if (!next.positions[i].allFinite() || !next.velocities[i].allFinite()) {
      throw SolverDivergenceError("cloth vertex " + std::to_string(i) + " became non-finite");
    }
  }

  const double mass = VertexMass(mesh, params);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < nc; ++c) {
      const std::size_t slot = static_cast<std::size_t>(i) * nc + c;
      if (!touched[slot]) continue;
      ContactRecord rec;
      rec.cloth_vertex = i;
      const Vec3 q = ClosestPointOnSegment(capsules[c].a, capsules[c].b, next.positions[i]);
      Vec3 dir = next.positions[i] - q;
      dir = dir.norm() > 1e-12 ? Vec3(dir.normalized()) : Vec3((capsules[c].b - capsules[c].a).unitOrthogonal());
      rec.point = q + capsules[c].radius * dir;
      rec.force = mass * correction[slot] / (dt * dt);
      rec.body_capsule = c;
      rec.sensor_bin = NearestSensor(body, rec.point);
      next.contacts.push_back(rec);
    }
  }
  return next;
}

int NearestSensor(const BodyState& body, const Vec3& point) {
  int best = -1;
  double best_d2 = 0.0;
  for (int s = 0; s < static_cast<int>(body.sensor_world.size()); ++s) {
    const double d2 = (body.sensor_world[s] - point).squaredNorm();
    if (best < 0 || d2 < best_d2) {
      best = s;
      best_d2 = d2;
    }
  }
  return best;
}

std::vector<Vec3> BinContacts(std::span<const ContactRecord> contacts, const BodyState& body) {
  std::vector<Vec3> bins(body.sensor_world.size(), Vec3::Zero());
  for (const ContactRecord& c : contacts) {
    const int s = NearestSensor(body, c.point);
    if (s >= 0) bins[s] += c.force;
  }
  return bins;
}

std::vector<int> SurfaceSign(std::span<const ContactRecord> contacts, const GarmentMesh& mesh,
                             const ClothState& cloth) {
  std::vector<int> signs(kSensorCount, 0);
  if (contacts.empty()) return signs;
  const std::vector<Vec3> normals = VertexNormals(mesh, cloth.positions);
  std::vector<double> sums(kSensorCount, 0.0);
  for (const ContactRecord& c : contacts) {
    if (c.sensor_bin < 0 || c.sensor_bin >= kSensorCount) continue;
    sums[c.sensor_bin] += c.force.dot(normals[c.cloth_vertex]);
  }
  for (int s = 0; s < kSensorCount; ++s) signs[s] = (sums[s] > 0.0) - (sums[s] < 0.0);
  return signs;
}

FrameWriter::FrameWriter(const std::string& path, std::uint32_t vertex_count)
    : out_(path, std::ios::binary | std::ios::trunc), vertex_count_(vertex_count) {
  if (!out_) throw ConfigError("cannot write frame file '" + path + "'");
  out_.write(kFrameMagic, 4);
  WriteU32(out_, vertex_count_);
  WriteU32(out_, 0);
}

FrameWriter::~FrameWriter() {
  if (out_.is_open()) Close();
}

void FrameWriter::Append(std::span<const Vec3> positions) {
  if (positions.size() != vertex_count_) throw UsageError("frame vertex count mismatch");
  for (const Vec3& p : positions) {
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(p[k]));
      WriteU32(out_, bits);
    }
  }
  ++frames_;
}

void FrameWriter::Close() {
  out_.seekp(8);
  WriteU32(out_, frames_);
  out_.close();
}

FrameFile ReadFrames(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open frame file '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (std::memcmp(magic, kFrameMagic, 4) != 0) throw ConfigError(path + ": not a frame file");
  FrameFile file;
  file.vertex_count = ReadU32(in);
  const std::uint32_t frames = ReadU32(in);
  for (std::uint32_t f = 0; f < frames; ++f) {
    std::vector<std::array<float, 3>> frame(file.vertex_count);
    for (auto& v : frame) {
      for (int k = 0; k < 3; ++k) v[k] = std::bit_cast<float>(ReadU32(in));
    }
    if (!in) throw ConfigError(path + ": truncated frame data");
    file.frames.push_back(std::move(frame));
  }
  return file;
}

}  // namespace donning

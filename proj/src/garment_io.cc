#include "donning/garment_io.h"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "donning/errors.h"

namespace donning {

std::string FeatureSidecarPath(const std::string& obj_path) {
  std::string base = obj_path;
  if (base.size() > 4 && base.compare(base.size() - 4, 4, ".obj") == 0) {
    base.resize(base.size() - 4);
  }
  return base + ".feature.json";
}

GarmentMesh LoadGarment(const std::string& obj_path) {
  std::ifstream obj(obj_path);
  if (!obj) throw ConfigError("cannot open garment mesh '" + obj_path + "'");

  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string line;
  int line_no = 0;
  while (std::getline(obj, line)) {
    ++line_no;
    std::istringstream in(line);
    std::string tag;
    if (!(in >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(in >> x >> y >> z)) {
        throw ConfigError(obj_path + ":" + std::to_string(line_no) + ": malformed vertex");
      }
      vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> face;
      std::string token;
      while (in >> token) {
        // Accept "i", "i/t", "i//n" and "i/t/n"; only the position index matters.
        int idx = 0;
        try {
          idx = std::stoi(token.substr(0, token.find('/')));
        } catch (const std::exception&) {
          throw ConfigError(obj_path + ":" + std::to_string(line_no) + ": bad face index '" +
                            token + "'");
        }
        face.push_back(idx > 0 ? idx - 1 : static_cast<int>(vertices.size()) + idx);
      }
      if (face.size() < 3) {
        throw ConfigError(obj_path + ":" + std::to_string(line_no) + ": face with < 3 vertices");
      }
      for (std::size_t k = 1; k + 1 < face.size(); ++k) {
        triangles.push_back({face[0], face[k], face[k + 1]});
      }
    }
  }

  const std::string sidecar = FeatureSidecarPath(obj_path);
  std::ifstream meta_file(sidecar);
  if (!meta_file) throw ConfigError("cannot open garment feature file '" + sidecar + "'");
  nlohmann::json meta;
  try {
    meta_file >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(sidecar + ": " + e.what());
  }
  std::vector<std::vector<int>> loops;
  int active = 0;
  std::vector<int> pins;
  try {
    loops = meta.at("loops").get<std::vector<std::vector<int>>>();
    active = meta.value("active", 0);
    if (meta.contains("pins")) pins = meta.at("pins").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(sidecar + ": " + e.what());
  }
  return MakeGarmentMesh(std::move(vertices), std::move(triangles), loops, active, std::move(pins));
}

void SaveGarment(const GarmentMesh& mesh, const std::string& base_path) {
  const std::string obj_path = base_path + ".obj";
  std::ofstream obj(obj_path);
  if (!obj) throw ConfigError("cannot write '" + obj_path + "'");
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    obj << buf;
  }
  for (const Triangle& t : mesh.triangles) {
    obj << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }

  nlohmann::json meta;
  meta["loops"] = nlohmann::json::array();
  for (const FeatureLoop& f : mesh.features) meta["loops"].push_back(f.vertex_indices);
  meta["active"] = mesh.active_feature;
  meta["pins"] = mesh.pins;
  const std::string sidecar = base_path + ".feature.json";
  std::ofstream out(sidecar);
  if (!out) throw ConfigError("cannot write '" + sidecar + "'");
  out << meta.dump(2) << '\n';
}

}  // namespace donning

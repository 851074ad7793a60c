#pragma once

#include <string>

#include "donning/garment.h"

namespace donning {

// Loads `<name>.obj` plus its `<name>.feature.json` sidecar:
//   { "loops": [[int, ...], ...], "active": int, "pins": [int, ...] }
// `pins` is optional. Throws ConfigError naming the path on I/O or parse
// failures.
GarmentMesh LoadGarment(const std::string& obj_path);

// Writes `<base>.obj` and `<base>.feature.json`.
void SaveGarment(const GarmentMesh& mesh, const std::string& base_path);

std::string FeatureSidecarPath(const std::string& obj_path);

}  // namespace donning

#include "donning/harness.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "donning/errors.h"
#include "donning/parallel.h"
#include "donning/garment_io.h"

namespace donning {

namespace {

using nlohmann::json;

// Walks a parsed document, remembering the key path so errors can point at
// the source line where the offending key appears.
class ConfigReader {
 public:
  ConfigReader(std::string_view text, std::string source) : text_(text), source_(std::move(source)) {}

  [[noreturn]] void Fail(const std::vector<std::string>& path, const std::string& what) const {
    std::string dotted;
    for (const std::string& k : path) dotted += (dotted.empty() ? "" : ".") + k;
    throw ConfigError(source_ + ":" + std::to_string(LineOf(path)) + ": " +
                      (dotted.empty() ? what : dotted + ": " + what));
  }

  void CheckKeys(const json& obj, const std::vector<std::string>& path,
                 std::initializer_list<std::string_view> allowed) const {
    if (!obj.is_object()) Fail(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (std::string_view a : allowed) ok = ok || it.key() == a;
      if (!ok) {
        std::vector<std::string> p = path;
        p.push_back(it.key());
        Fail(p, "unknown key");
      }
    }
  }

  double Number(const json& obj, std::vector<std::string> path, const char* key, double fallback,
                double lo = -1e300, double hi = 1e300) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) Fail(path, "expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) {
      Fail(path, "value " + FormatNumber(x) + " outside [" + FormatNumber(lo) + ", " +
                     FormatNumber(hi) + "]");
    }
    return x;
  }

  int Integer(const json& obj, std::vector<std::string> path, const char* key, int fallback,
              int lo, int hi) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) Fail(path, "expected an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > hi) {
      Fail(path, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
    }
    return static_cast<int>(x);
  }

  bool Bool(const json& obj, std::vector<std::string> path, const char* key, bool fallback) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean()) Fail(path, "expected true or false");
    return obj.at(key).get<bool>();
  }

  std::string String(const json& obj, std::vector<std::string> path, const char* key,
                     const std::string& fallback) const {
    path.push_back(key);
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) Fail(path, "expected a string");
    return obj.at(key).get<std::string>();
  }

  Vec3 Vector(const json& v, const std::vector<std::string>& path) const {
    if (!v.is_array() || v.size() != 3) Fail(path, "expected an array of 3 numbers");
    Vec3 out;
    for (int k = 0; k < 3; ++k) {
      if (!v[k].is_number()) Fail(path, "expected an array of 3 numbers");
      out[k] = v[k].get<double>();
    }
    return out;
  }

  Box ReadBox(const json& v, const std::vector<std::string>& path) const {
    CheckKeys(v, path, {"center", "size"});
    if (!v.contains("center") || !v.contains("size")) Fail(path, "box needs center and size");
    Box b;
    auto p = path;
    p.push_back("center");
    b.center = Vector(v.at("center"), p);
    p.back() = "size";
    b.size = Vector(v.at("size"), p);
    if ((b.size.array() < 0.0).any()) Fail(p, "box sizes must be non-negative");
    return b;
  }

  int LineOf(const std::vector<std::string>& path) const {
    std::size_t pos = 0;
    std::size_t found_at = 0;
    for (const std::string& key : path) {
      const std::size_t f = text_.find("\"" + key + "\"", pos);
      if (f == std::string_view::npos) break;
      found_at = f;
      pos = f + key.size() + 2;
    }
    int line = 1;
    for (std::size_t i = 0; i < found_at && i < text_.size(); ++i) line += text_[i] == '\n';
    return line;
  }

  int LineOfByte(std::size_t byte) const {
    int line = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text_.size(); ++i) line += text_[i] == '\n';
    return line;
  }

  const std::string& source() const { return source_; }

 private:
  std::string_view text_;
  std::string source_;
};

std::string Resolve(const std::string& base_dir, const std::string& path) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

json BoxToJson(const Box& b) {
  return {{"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"size", {b.size.x(), b.size.y(), b.size.z()}}};
}

std::string Join(std::span<const std::string_view> columns) {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out += ',';
    out += columns[i];
  }
  return out;
}

std::ofstream OpenOut(const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

}  // namespace

ExperimentConfig ParseExperimentConfig(std::string_view text, const std::string& source,
                                       const std::string& base_dir) {
  const ConfigReader r(text, source);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(r.LineOfByte(e.byte)) + ": " +
                      "malformed JSON (" + e.what() + ")");
  }
  r.CheckKeys(doc, {},
              {"experiment_id", "task", "garment", "body", "actuation", "cloth", "episode",
               "reward", "trainer", "eval", "seed", "ablation"});
  ExperimentConfig c;
  c.experiment_id = r.String(doc, {}, "experiment_id", c.experiment_id);
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer()) {
      r.Fail({"seed"}, "expected a non-negative integer");
    }
    if (doc["seed"].is_number_integer() && doc["seed"].get<long long>() < 0) {
      r.Fail({"seed"}, "expected a non-negative integer");
    }
    c.seed = doc["seed"].get<std::uint64_t>();
  }

  if (doc.contains("task")) {
    const json& t = doc["task"];
    r.CheckKeys(t, {"task"}, {"kind", "start_box", "target_box", "travel_time"});
    try {
      c.task = ParseTaskKind(r.String(t, {"task"}, "kind", "FixedGown"));
    } catch (const ConfigError& e) {
      r.Fail({"task", "kind"}, e.what());
    }
    if (t.contains("start_box")) c.start_box = r.ReadBox(t["start_box"], {"task", "start_box"});
    if (t.contains("target_box")) c.target_box = r.ReadBox(t["target_box"], {"task", "target_box"});
    c.travel_time = r.Number(t, {"task"}, "travel_time", c.travel_time, 1e-6, 1e6);
  }

  if (doc.contains("garment")) {
    const json& g = doc["garment"];
    r.CheckKeys(g, {"garment"}, {"obj", "sleeve"});
    c.garment_path = Resolve(base_dir, r.String(g, {"garment"}, "obj", ""));
    if (g.contains("sleeve")) {
      const json& s = g["sleeve"];
      const std::vector<std::string> p = {"garment", "sleeve"};
      r.CheckKeys(s, p,
                  {"rings", "segments", "radius", "length", "panel_rows", "panel_spread",
                   "panel_step"});
      c.sleeve.rings = r.Integer(s, p, "rings", c.sleeve.rings, 2, 10000);
      c.sleeve.segments = r.Integer(s, p, "segments", c.sleeve.segments, 3, 10000);
      c.sleeve.radius = r.Number(s, p, "radius", c.sleeve.radius, 1e-4, 10.0);
      c.sleeve.length = r.Number(s, p, "length", c.sleeve.length, 1e-4, 10.0);
      c.sleeve.panel_rows = r.Integer(s, p, "panel_rows", c.sleeve.panel_rows, 0, 1000);
      c.sleeve.panel_spread = r.Number(s, p, "panel_spread", c.sleeve.panel_spread, 0.0, 10.0);
      c.sleeve.panel_step = r.Number(s, p, "panel_step", c.sleeve.panel_step, 1e-4, 10.0);
    }
  }
  c.body_path = Resolve(base_dir, r.String(doc, {}, "body", ""));

  if (doc.contains("actuation")) {
    const json& a = doc["actuation"];
    r.CheckKeys(a, {"actuation"}, {"accel_scale", "damping"});
    ActuationParams act;
    act.accel_scale = r.Number(a, {"actuation"}, "accel_scale", act.accel_scale, 0.0, 1e4);
    act.damping = r.Number(a, {"actuation"}, "damping", act.damping, 0.0, 1e4);
    c.actuation = act;
  }

  if (doc.contains("cloth")) {
    const json& cl = doc["cloth"];
    const std::vector<std::string> p = {"cloth"};
    r.CheckKeys(cl, p,
                {"iterations", "stretch_stiffness", "bend_stiffness", "total_mass", "thickness",
                 "gravity", "damping", "static_friction", "friction", "tether_scale", "strain_limit",
                 "strain_limit_passes"});
    ClothParams& k = c.cloth;
    k.iterations = r.Integer(cl, p, "iterations", k.iterations, 1, 10000);
    k.stretch_stiffness = r.Number(cl, p, "stretch_stiffness", k.stretch_stiffness, 0.0, 1.0);
    k.bend_stiffness = r.Number(cl, p, "bend_stiffness", k.bend_stiffness, 0.0, 1.0);
    k.total_mass = r.Number(cl, p, "total_mass", k.total_mass, 1e-9, 1e6);
    k.thickness = r.Number(cl, p, "thickness", k.thickness, 0.0, 1.0);
    k.gravity = r.Number(cl, p, "gravity", k.gravity, -1e3, 1e3);
    k.damping = r.Number(cl, p, "damping", k.damping, 0.0, 1.0);
    k.static_friction = r.Number(cl, p, "static_friction", k.static_friction, 0.0, 100.0);
    k.friction = r.Number(cl, p, "friction", k.friction, 0.0, 100.0);
    k.tether_scale = r.Number(cl, p, "tether_scale", k.tether_scale, 0.0, 100.0);
    k.strain_limit = r.Number(cl, p, "strain_limit", k.strain_limit, 0.0, 1.0);
    k.strain_limit_passes =
        r.Integer(cl, p, "strain_limit_passes", k.strain_limit_passes, 0, 100000);
  }

  if (doc.contains("episode")) {
    const json& e = doc["episode"];
    const std::vector<std::string> p = {"episode"};
    r.CheckKeys(e, p, {"horizon", "frame_skip", "sim_dt", "gamma", "warmup"});
    c.episode.horizon = r.Integer(e, p, "horizon", c.episode.horizon, 1, 1000000);
    c.episode.frame_skip = r.Integer(e, p, "frame_skip", c.episode.frame_skip, 1, 1000);
    c.episode.sim_dt = r.Number(e, p, "sim_dt", c.episode.sim_dt, 1e-6, 1.0);
    c.episode.gamma = r.Number(e, p, "gamma", c.episode.gamma, 1e-9, 1.0 - 1e-12);
    c.episode.warmup = r.Number(e, p, "warmup", c.episode.warmup, 0.0, 1e3);
  }

  if (doc.contains("reward")) {
    const json& w = doc["reward"];
    const std::vector<std::string> p = {"reward"};
    r.CheckKeys(w, p, {"progress", "deformation", "geodesic", "upright", "threshold", "scale"});
    c.weights.progress = r.Number(w, p, "progress", c.weights.progress);
    c.weights.deformation = r.Number(w, p, "deformation", c.weights.deformation);
    c.weights.geodesic = r.Number(w, p, "geodesic", c.weights.geodesic);
    c.weights.upright = r.Number(w, p, "upright", c.weights.upright);
    c.deformation.threshold = r.Number(w, p, "threshold", c.deformation.threshold);
    c.deformation.scale = r.Number(w, p, "scale", c.deformation.scale, 0.0, 1e6);
  }

  c.trainer.gamma = c.episode.gamma;
  if (doc.contains("trainer")) {
    const json& t = doc["trainer"];
    const std::vector<std::string> p = {"trainer"};
    r.CheckKeys(t, p,
                {"kl_step", "cg_iterations", "cg_damping", "backtrack_ratio", "max_backtracks",
                 "samples_per_iter", "iterations", "hidden", "init_log_std",
                 "checkpoint_every"});
    TrainerConfig& k = c.trainer;
    k.trpo.kl_step = r.Number(t, p, "kl_step", k.trpo.kl_step, 1e-12, 1e6);
    k.trpo.cg_iterations = r.Integer(t, p, "cg_iterations", k.trpo.cg_iterations, 1, 100000);
    k.trpo.cg_damping = r.Number(t, p, "cg_damping", k.trpo.cg_damping, 0.0, 1e6);
    k.trpo.backtrack_ratio = r.Number(t, p, "backtrack_ratio", k.trpo.backtrack_ratio, 1e-6, 1.0);
    k.trpo.max_backtracks = r.Integer(t, p, "max_backtracks", k.trpo.max_backtracks, 1, 1000);
    k.samples_per_iter = r.Integer(t, p, "samples_per_iter", k.samples_per_iter, 1, 100000000);
    k.iterations = r.Integer(t, p, "iterations", k.iterations, 0, 10000000);
    k.init_log_std = r.Number(t, p, "init_log_std", k.init_log_std, -20.0, 20.0);
    c.checkpoint_every = r.Integer(t, p, "checkpoint_every", c.checkpoint_every, 1, 10000000);
    if (t.contains("hidden")) {
      const json& h = t["hidden"];
      if (!h.is_array()) r.Fail({"trainer", "hidden"}, "expected an array of layer sizes");
      k.hidden.clear();
      for (const json& v : h) {
        if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 100000) {
          r.Fail({"trainer", "hidden"}, "layer sizes must be positive integers");
        }
        k.hidden.push_back(v.get<int>());
      }
    }
  }
  if (c.episode.horizon > c.trainer.samples_per_iter) {
    r.Fail({"trainer", "samples_per_iter"}, "must cover at least one episode horizon");
  }

  if (doc.contains("eval")) {
    const json& e = doc["eval"];
    r.CheckKeys(e, {"eval"}, {"episodes"});
    c.eval_episodes = r.Integer(e, {"eval"}, "episodes", c.eval_episodes, 1, 10000000);
  }
  if (doc.contains("ablation")) {
    const json& a = doc["ablation"];
    r.CheckKeys(a, {"ablation"}, {"no_haptics", "no_task"});
    c.no_haptics = r.Bool(a, {"ablation"}, "no_haptics", false);
    c.no_task = r.Bool(a, {"ablation"}, "no_task", false);
  }
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  return ParseExperimentConfig(text, path, std::filesystem::path(path).parent_path().string());
}

json ExperimentConfigToJson(const ExperimentConfig& c) {
  json task = {{"kind", TaskName(c.task)}, {"travel_time", c.travel_time}};
  if (c.start_box) task["start_box"] = BoxToJson(*c.start_box);
  if (c.target_box) task["target_box"] = BoxToJson(*c.target_box);
  json garment = json::object();
  if (!c.garment_path.empty()) {
    garment["obj"] = c.garment_path;
  } else {
    garment["sleeve"] = {{"rings", c.sleeve.rings},           {"segments", c.sleeve.segments},
                         {"radius", c.sleeve.radius},         {"length", c.sleeve.length},
                         {"panel_rows", c.sleeve.panel_rows}, {"panel_spread", c.sleeve.panel_spread},
                         {"panel_step", c.sleeve.panel_step}};
  }
  json doc = {
      {"experiment_id", c.experiment_id},
      {"seed", c.seed},
      {"task", task},
      {"garment", garment},
      {"cloth",
       {{"iterations", c.cloth.iterations},
        {"stretch_stiffness", c.cloth.stretch_stiffness},
        {"bend_stiffness", c.cloth.bend_stiffness},
        {"total_mass", c.cloth.total_mass},
        {"thickness", c.cloth.thickness},
        {"gravity", c.cloth.gravity},
        {"damping", c.cloth.damping},
        {"static_friction", c.cloth.static_friction},
        {"friction", c.cloth.friction},
        {"tether_scale", c.cloth.tether_scale},
        {"strain_limit", c.cloth.strain_limit},
        {"strain_limit_passes", c.cloth.strain_limit_passes}}},
      {"episode",
       {{"horizon", c.episode.horizon},
        {"frame_skip", c.episode.frame_skip},
        {"sim_dt", c.episode.sim_dt},
        {"gamma", c.episode.gamma},
        {"warmup", c.episode.warmup}}},
      {"reward",
       {{"progress", c.weights.progress},
        {"deformation", c.weights.deformation},
        {"geodesic", c.weights.geodesic},
        {"upright", c.weights.upright},
        {"threshold", c.deformation.threshold},
        {"scale", c.deformation.scale}}},
      {"trainer",
       {{"kl_step", c.trainer.trpo.kl_step},
        {"cg_iterations", c.trainer.trpo.cg_iterations},
        {"cg_damping", c.trainer.trpo.cg_damping},
        {"backtrack_ratio", c.trainer.trpo.backtrack_ratio},
        {"max_backtracks", c.trainer.trpo.max_backtracks},
        {"samples_per_iter", c.trainer.samples_per_iter},
        {"iterations", c.trainer.iterations},
        {"hidden", c.trainer.hidden},
        {"init_log_std", c.trainer.init_log_std},
        {"checkpoint_every", c.checkpoint_every}}},
      {"eval", {{"episodes", c.eval_episodes}}},
      {"ablation", {{"no_haptics", c.no_haptics}, {"no_task", c.no_task}}},
  };
  if (!c.body_path.empty()) doc["body"] = c.body_path;
  if (c.actuation) {
    doc["actuation"] = {{"accel_scale", c.actuation->accel_scale},
                        {"damping", c.actuation->damping}};
  }
  return doc;
}

std::shared_ptr<const EnvConfig> BuildEnvConfig(const ExperimentConfig& c) {
  auto env = std::make_shared<EnvConfig>();
  if (!c.body_path.empty()) {
    if (!std::filesystem::exists(c.body_path)) {
      throw ConfigError("body file not found: " + c.body_path);
    }
    env->body = LoadBodyModel(c.body_path);
  }
  if (c.actuation) env->body.actuation = *c.actuation;
  if (!c.garment_path.empty()) {
    if (!std::filesystem::exists(c.garment_path)) {
      throw ConfigError("garment file not found: " + c.garment_path);
    }
    env->garment = std::make_shared<const GarmentMesh>(LoadGarment(c.garment_path));
  } else {
    env->garment = std::make_shared<const GarmentMesh>(MakeSleeve(c.sleeve));
  }
  env->task = DefaultTask(c.task, env->body);
  if (c.start_box) env->task.start = *c.start_box;
  if (c.target_box) env->task.target = *c.target_box;
  env->task.travel_time = c.travel_time;
  ValidateTask(env->task);
  env->cloth = c.cloth;
  env->episode = c.episode;
  env->weights = c.weights;
  env->deformation = c.deformation;
  if (c.no_haptics) {
    env->observation.zero_haptics = true;
    env->weights.deformation = 0.0;
  }
  if (c.no_task) env->observation.zero_task = true;
  return env;
}

TrainerConfig BuildTrainerConfig(const ExperimentConfig& c) {
  TrainerConfig t = c.trainer;
  t.gamma = c.episode.gamma;
  t.seed = c.seed;
  t.workers = DefaultWorkerCount();
  return t;
}

std::vector<std::uint64_t> EvaluationSeeds(std::uint64_t seed, int episodes) {
  return EpisodeSeeds(MixSeed(seed, 0x4556414c), episodes);
}

std::string FormatNumber(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string CsvHeader(std::span<const std::string_view> columns) { return Join(columns) + "\n"; }

std::string LearningCurveRow(const IterationStats& s) {
  return std::to_string(s.iteration) + "," + FormatNumber(s.mean_return) + "," +
         FormatNumber(s.std_return) + "," + FormatNumber(s.mean_final_progress) + "," +
         FormatNumber(s.mean_max_deformation) + "," + FormatNumber(s.step.kl) + "," +
         FormatNumber(s.step.surrogate_improvement) + "\n";
}

std::string WriteEvaluation(const std::string& dir, const std::string& name,
                            const EvaluationResult& result) {
  const std::filesystem::path base(dir);
  {
    std::ofstream out = OpenOut((base / (name + "_curves.csv")).string());
    out << CsvHeader(kEvalCurveColumns);
    for (std::size_t t = 0; t < result.progress_mean.size(); ++t) {
      out << t << ',' << FormatNumber(result.progress_mean[t]) << ','
          << FormatNumber(result.progress_std[t]) << ',' << FormatNumber(result.deformation_mean[t])
          << ',' << FormatNumber(result.deformation_std[t]) << '\n';
    }
  }
  {
    std::ofstream out = OpenOut((base / (name + "_episodes.csv")).string());
    out << CsvHeader(kEvalEpisodeColumns);
    for (std::size_t e = 0; e < result.episodes.size(); ++e) {
      const EpisodeTrace& tr = result.episodes[e];
      const double peak = tr.max_deformation.empty()
                              ? 0.0
                              : *std::max_element(tr.max_deformation.begin(),
                                                  tr.max_deformation.end());
      out << e << ',' << tr.seed << ','
          << FormatNumber(tr.progress.empty() ? 0.0 : tr.progress.back()) << ','
          << FormatNumber(peak) << ',' << FormatNumber(tr.total_reward) << ','
          << (tr.diverged ? 1 : 0) << '\n';
    }
  }
  {
    std::ofstream out = OpenOut((base / (name + "_observations.csv")).string());
    out << "step";
    for (const ObservationSegment& seg : kObservationLayout) {
      for (int k = 0; k < seg.length; ++k) out << ',' << seg.name << '_' << k;
    }
    out << '\n';
    for (std::size_t t = 0; t < result.first_episode_observations.size(); ++t) {
      out << t;
      for (double v : result.first_episode_observations[t]) out << ',' << FormatNumber(v);
      out << '\n';
    }
  }
  return name + "," + std::to_string(result.episodes.size()) + "," +
         FormatNumber(result.final_progress_mean) + "," + FormatNumber(result.final_progress_std) +
         "," + FormatNumber(result.episode_max_deformation_mean) + "," +
         FormatNumber(result.episode_max_deformation_std) + "," + FormatNumber(result.return_mean) +
         "," + FormatNumber(result.return_std) + "\n";
}

json ManifestToJson(const ExperimentManifest& m) {
  return {{"experiment_id", m.experiment_id},
          {"command", m.command},
          {"task", TaskName(m.config.task)},
          {"config", ExperimentConfigToJson(m.config)},
          {"seeds", m.seeds},
          {"csv_schema_version", kCsvSchemaVersion},
          {"layout",
           {{"checkpoints", "checkpoints/"},
            {"curves", "curves/"},
            {"eval", "eval/"},
            {"frames", "frames/"}}},
          {"details", m.extra.is_null() ? json::object() : m.extra}};
}

void WriteManifest(const std::string& path, const ExperimentManifest& m) {
  std::ofstream out = OpenOut(path);
  out << ManifestToJson(m).dump(2) << '\n';
}

json RewardToJson(const RewardBreakdown& r) {
  return {{"r_p", r.r_p},
          {"r_d", r.r_d},
          {"r_g", r.r_g},
          {"r_u", r.r_u},
          {"total", r.total},
          {"k_int", r.k_int},
          {"containment_depth", r.containment_depth},
          {"max_deformation", r.max_deformation}};
}

json DiagnosticsToJson(const StepDiagnostics& d) {
  return {{"step", d.step},
          {"time", d.time},
          {"k_int", d.k_int},
          {"containment_depth", d.containment_depth},
          {"max_deformation", d.max_deformation},
          {"task_case", static_cast<int>(d.task_case)},
          {"diverged", d.diverged},
          {"feature_fit_failed", d.feature_fit_failed},
          {"gripper", {d.gripper.x(), d.gripper.y(), d.gripper.z()}}};
}

json StepResultToJson(const StepResult& r) {
  return {{"observation", r.observation.values},
          {"reward", RewardToJson(r.reward)},
          {"done", r.done},
          {"diagnostics", DiagnosticsToJson(r.diagnostics)}};
}

json EnvSpecJson(const EnvConfig& config) {
  json layout = json::array();
  for (const ObservationSegment& s : kObservationLayout) {
    layout.push_back({{"name", std::string(s.name)}, {"offset", s.offset}, {"length", s.length}});
  }
  return {{"obs_dim", kObservationSize},
          {"act_dim", kActuatedCount},
          {"horizon", config.episode.horizon},
          {"control_dt", config.episode.control_dt()},
          {"action_low", -1.0},
          {"action_high", 1.0},
          {"task", TaskName(config.task.kind)},
          {"observation_layout", layout}};
}

}  // namespace donning

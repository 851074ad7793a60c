#include "donning/cli.h"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "donning/errors.h"
#include "donning/parallel.h"
#include "donning/garment.h"
#include "donning/garment_io.h"
#include "donning/harness.h"
#include "donning/server.h"

namespace donning {

namespace {

namespace fs = std::filesystem;

std::atomic<bool> g_stop{false};

void OnSignal(int) { g_stop = true; }

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool no_haptics = false;
  bool no_task = false;
};

void AddCommon(CLI::App* cmd, CommonFlags& f, bool ablations) {
  cmd->add_option("--config", f.config, "Experiment configuration (JSON)");
  cmd->add_option("--seed", f.seed, "Base seed (overrides the config)");
  cmd->add_option("--out", f.out, "Output directory");
  if (ablations) {
    cmd->add_flag("--no-haptics", f.no_haptics,
                  "Zero haptic and surface observations and drop the deformation reward");
    cmd->add_flag("--no-task", f.no_task, "Zero the task-vector observation");
  }
}

ExperimentConfig Resolve(const CommonFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : LoadExperimentConfig(f.config);
  if (f.seed) c.seed = *f.seed;
  c.no_haptics = c.no_haptics || f.no_haptics;
  c.no_task = c.no_task || f.no_task;
  return c;
}

std::string OutDir(const CommonFlags& f, const ExperimentConfig& c) {
  return f.out.empty() ? (fs::path("runs") / c.experiment_id).string() : f.out;
}

// Keeps the header and rows of iterations before `start`.
std::string ExistingCurvePrefix(const std::string& path, int start) {
  std::ifstream in(path);
  std::string line, kept;
  if (!in || !std::getline(in, line)) return CsvHeader(kLearningCurveColumns);
  kept = line + "\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const int it = std::atoi(line.substr(0, line.find(',')).c_str());
    if (it < start) kept += line + "\n";
  }
  return kept;
}

int Train(const CommonFlags& f, std::optional<int> iters, std::optional<int> samples,
          const std::string& resume, std::ostream& out) {
  ExperimentConfig cfg = Resolve(f);
  if (iters) cfg.trainer.iterations = *iters;
  if (samples) cfg.trainer.samples_per_iter = *samples;
  const std::string dir = OutDir(f, cfg);
  const auto env_config = BuildEnvConfig(cfg);
  const TrainerConfig tc = BuildTrainerConfig(cfg);
  const EnvFactory factory = DressingEnvFactory(env_config);

  std::optional<Trainer> trainer;
  if (!resume.empty()) {
    trainer.emplace(factory, tc, LoadCheckpoint(resume));
  } else {
    trainer.emplace(factory, tc);
  }
  const int start = trainer->iteration();
  const int end = start + cfg.trainer.iterations;

  ExperimentManifest manifest;
  manifest.experiment_id = cfg.experiment_id;
  manifest.command = "train";
  manifest.config = cfg;
  nlohmann::json per_iteration = nlohmann::json::array();
  for (int it = start; it < end; ++it) {
    const std::vector<std::uint64_t> s = trainer->IterationSeeds(it);
    manifest.seeds.insert(manifest.seeds.end(), s.begin(), s.end());
    per_iteration.push_back({{"iteration", it}, {"trajectory_seeds", s}});
  }
  manifest.extra = {{"first_iteration", start},
                    {"end_iteration", end},
                    {"resume_from", resume},
                    {"iterations", per_iteration}};
  WriteManifest((fs::path(dir) / "manifest.json").string(), manifest);

  const std::string curve_path = (fs::path(dir) / "curves" / "learning_curve.csv").string();
  const std::string prefix = resume.empty() ? CsvHeader(kLearningCurveColumns)
                                            : ExistingCurvePrefix(curve_path, start);
  fs::create_directories(fs::path(curve_path).parent_path());
  fs::create_directories(fs::path(dir) / "checkpoints");
  std::ofstream curve(curve_path, std::ios::binary | std::ios::trunc);
  if (!curve) throw ConfigError("cannot write " + curve_path);
  curve << prefix;
  curve.flush();

  const nlohmann::json echo = ExperimentConfigToJson(cfg);
  for (int it = start; it < end; ++it) {
    const IterationStats s = trainer->RunIteration();
    curve << LearningCurveRow(s);
    curve.flush();
    out << "iter " << s.iteration << " return " << FormatNumber(s.mean_return) << " progress "
        << FormatNumber(s.mean_final_progress) << " max_def "
        << FormatNumber(s.mean_max_deformation) << " kl " << FormatNumber(s.step.kl)
        << (s.step.accepted ? "" : " (step rejected)") << '\n';
    out.flush();
    if ((it + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "iter_%06d.ckpt", it + 1);
      SaveCheckpoint((fs::path(dir) / "checkpoints" / name).string(),
                     trainer->MakeCheckpoint(echo));
    }
  }
  SaveCheckpoint((fs::path(dir) / "checkpoints" / "final.ckpt").string(),
                 trainer->MakeCheckpoint(echo));
  return kExitOk;
}

struct NamedPolicy {
  std::string name;
  PolicyFactory factory;
  ExperimentConfig config;
};

// Checkpoint ablation flags carry over so a policy always sees the
// observation layout it was trained with.
NamedPolicy CheckpointPolicy(const std::string& path, const ExperimentConfig& base) {
  const Checkpoint ck = LoadCheckpoint(path);
  NamedPolicy p{fs::path(path).stem().string(), MeanPolicy(ck.policy), base};
  if (ck.config.is_object() && ck.config.contains("ablation")) {
    const auto& a = ck.config["ablation"];
    p.config.no_haptics = p.config.no_haptics || a.value("no_haptics", false);
    p.config.no_task = p.config.no_task || a.value("no_task", false);
  }
  const auto env = BuildEnvConfig(p.config);
  CheckCompatible(ck, kObservationSize, kActuatedCount, env->episode.horizon);
  return p;
}

int Eval(const CommonFlags& f, const std::vector<std::string>& checkpoints, bool random, bool zero,
         std::optional<int> episodes, std::ostream& out) {
  const ExperimentConfig cfg = Resolve(f);
  BuildEnvConfig(cfg);  // fail before anything is written
  const int n = episodes.value_or(cfg.eval_episodes);
  if (n < 1) throw UsageError("--episodes must be positive");
  std::vector<NamedPolicy> policies;
  for (const std::string& path : checkpoints) policies.push_back(CheckpointPolicy(path, cfg));
  if (random) policies.push_back({"random", RandomPolicy(), cfg});
  if (zero) policies.push_back({"zero", ZeroPolicy(), cfg});
  if (policies.empty()) throw UsageError("eval needs --checkpoint, --random or --zero");
  for (std::size_t i = 0; i < policies.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (policies[j].name == policies[i].name) policies[i].name += "_" + std::to_string(i);
    }
  }

  const std::string dir = (fs::path(OutDir(f, cfg)) / "eval").string();
  const std::vector<std::uint64_t> seeds = EvaluationSeeds(cfg.seed, n);
  ExperimentManifest manifest;
  manifest.experiment_id = cfg.experiment_id;
  manifest.command = "eval";
  manifest.config = cfg;
  manifest.seeds = seeds;
  nlohmann::json listed = nlohmann::json::array();
  for (const NamedPolicy& p : policies) {
    listed.push_back({{"name", p.name},
                      {"no_haptics", p.config.no_haptics},
                      {"no_task", p.config.no_task}});
  }
  manifest.extra = {{"policies", listed}, {"checkpoints", checkpoints}};
  WriteManifest((fs::path(dir) / "manifest.json").string(), manifest);

  std::string summary = CsvHeader(kEvalSummaryColumns);
  for (const NamedPolicy& p : policies) {
    const EvaluationResult r =
        Evaluate(BuildEnvConfig(p.config), p.factory, seeds, DefaultWorkerCount());
    summary += WriteEvaluation(dir, p.name, r);
    out << p.name << ": final progress " << FormatNumber(r.final_progress_mean) << " +- "
        << FormatNumber(r.final_progress_std) << ", max deformation "
        << FormatNumber(r.episode_max_deformation_mean) << '\n';
  }
  std::ofstream s((fs::path(dir) / "summary.csv").string(), std::ios::binary | std::ios::trunc);
  s << summary;
  return kExitOk;
}

int Serve(const CommonFlags& f, int port, const std::string& host, std::ostream& out) {
  const ExperimentConfig cfg = Resolve(f);
  BuildEnvConfig(cfg);  // fail fast on a bad configuration
  EnvServer server(cfg, port, host);
  out << "listening on " << host << ":" << server.port() << '\n';
  out.flush();
  g_stop = false;
  struct sigaction sa {};
  sa.sa_handler = OnSignal;
  sigemptyset(&sa.sa_mask);
  struct sigaction old_int {}, old_term {};
  sigaction(SIGINT, &sa, &old_int);
  sigaction(SIGTERM, &sa, &old_term);
  server.Run(&g_stop);
  sigaction(SIGINT, &old_int, nullptr);
  sigaction(SIGTERM, &old_term, nullptr);
  out << "server stopped\n";
  return kExitOk;
}

int GenGarment(const std::string& base, const SleeveParams& params, std::ostream& out) {
  if (base.empty()) throw UsageError("gen-garment needs --out <base path>");
  const GarmentMesh mesh = MakeSleeve(params);
  const fs::path parent = fs::path(base).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  SaveGarment(mesh, base);
  out << "wrote " << base << ".obj (" << mesh.vertex_count() << " vertices, "
      << mesh.triangles.size() << " triangles) and " << base << ".feature.json\n";
  return kExitOk;
}

int ExportFrames(const CommonFlags& f, const std::string& checkpoint, bool random,
                 std::ostream& out) {
  const ExperimentConfig cfg = Resolve(f);
  NamedPolicy policy{"zero", ZeroPolicy(), cfg};
  if (!checkpoint.empty()) {
    policy = CheckpointPolicy(checkpoint, cfg);
  } else if (random) {
    policy = {"random", RandomPolicy(), cfg};
  }
  const auto env_config = BuildEnvConfig(policy.config);
  const std::uint64_t seed = EvaluationSeeds(cfg.seed, 1)[0];
  const fs::path dir = fs::path(OutDir(f, cfg)) / "frames";
  ExperimentManifest manifest;
  manifest.experiment_id = cfg.experiment_id;
  manifest.command = "export-frames";
  manifest.config = policy.config;
  manifest.seeds = {seed};
  manifest.extra = {{"policy", policy.name}, {"checkpoint", checkpoint}};
  WriteManifest((dir / "manifest.json").string(), manifest);

  const std::string path = (dir / (policy.name + "_episode_0.dnfr")).string();
  DressingEnv env(env_config);
  FrameWriter writer(path, static_cast<std::uint32_t>(env_config->garment->vertex_count()));
  ActionFn act = policy.factory(seed);
  StepResult r = env.Reset(seed);
  writer.Append(env.cloth().positions);
  while (!r.done) {
    std::vector<double> a = act(r.observation);
    for (double& x : a) x = std::clamp(x, -1.0, 1.0);
    r = env.Step(a);
    writer.Append(env.cloth().positions);
  }
  writer.Close();
  out << "wrote " << writer.frame_count() << " frames to " << path << '\n';
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulated dressing: train and evaluate dressing policies"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, serve_flags, frame_flags;
  std::optional<int> iters, samples, episodes;
  std::string resume, frame_checkpoint, host = "127.0.0.1", garment_out;
  std::vector<std::string> checkpoints;
  bool eval_random = false, eval_zero = false, frame_random = false;
  int port = 5555;
  SleeveParams sleeve;
  std::string gen_config;
  std::optional<std::uint64_t> gen_seed;

  CLI::App* train = app.add_subcommand("train", "Train a policy with TRPO");
  AddCommon(train, train_flags, true);
  train->add_option("--iters", iters, "Iterations to run (overrides the config)");
  train->add_option("--samples", samples, "Samples per iteration (overrides the config)");
  train->add_option("--resume", resume, "Continue from a checkpoint");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate policies over seeded episodes");
  AddCommon(eval, eval_flags, true);
  eval->add_option("--checkpoint", checkpoints, "Policy checkpoint (repeatable)");
  eval->add_flag("--random", eval_random, "Include the uniform random policy");
  eval->add_flag("--zero", eval_zero, "Include the zero-action policy");
  eval->add_option("--episodes", episodes, "Episodes per policy (default from config)");

  CLI::App* serve = app.add_subcommand("serve", "Serve environments over TCP");
  AddCommon(serve, serve_flags, true);
  serve->add_option("--port", port, "TCP port (0 picks a free one)");
  serve->add_option("--host", host, "Listen address");

  CLI::App* gen = app.add_subcommand("gen-garment", "Write the procedural sleeve as OBJ + JSON");
  gen->add_option("--out", garment_out, "Output base path (without extension)")->required();
  gen->add_option("--config", gen_config, "Unused; accepted for uniformity");
  gen->add_option("--seed", gen_seed, "Unused; the sleeve is deterministic");
  gen->add_option("--rings", sleeve.rings, "Rings along the sleeve");
  gen->add_option("--segments", sleeve.segments, "Vertices per ring");
  gen->add_option("--radius", sleeve.radius, "Sleeve radius (m)");
  gen->add_option("--length", sleeve.length, "Sleeve length (m)");
  gen->add_option("--panel-rows", sleeve.panel_rows, "Rows of the flared panel");

  CLI::App* frames = app.add_subcommand("export-frames", "Record cloth frames of one episode");
  AddCommon(frames, frame_flags, true);
  frames->add_option("--checkpoint", frame_checkpoint, "Policy checkpoint (default: zero actions)");
  frames->add_flag("--random", frame_random, "Use the uniform random policy");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train) return Train(train_flags, iters, samples, resume, out);
    if (*eval) return Eval(eval_flags, checkpoints, eval_random, eval_zero, episodes, out);
    if (*serve) return Serve(serve_flags, port, host, out);
    if (*gen) return GenGarment(garment_out, sleeve, out);
    if (*frames) return ExportFrames(frame_flags, frame_checkpoint, frame_random, out);
  } catch (const IncompatibleCheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIncompatible;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace donning

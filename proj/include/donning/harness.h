#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "donning/env.h"
#include "donning/trainer.h"

namespace donning {

struct ExperimentConfig {
  std::string experiment_id = "experiment";
  TaskKind task = TaskKind::kFixedGown;
  // Box overrides; unset boxes take the task defaults for the body.
  std::optional<Box> start_box;
  std::optional<Box> target_box;
  double travel_time = 10.0;
  std::string garment_path;  // OBJ with a feature sidecar; empty = procedural sleeve
  SleeveParams sleeve;
  std::string body_path;     // body JSON; empty = default body
  std::optional<ActuationParams> actuation;
  ClothParams cloth;
  EpisodeConfig episode;
  RewardWeights weights;
  DeformationParams deformation;
  TrainerConfig trainer;
  int checkpoint_every = 10;
  int eval_episodes = 100;
  std::uint64_t seed = 0;
  bool no_haptics = false;
  bool no_task = false;
};

// Parses a JSON document. Errors are ConfigErrors of the form
// "<source>:<line>: <message>"; unknown keys are rejected. Relative paths
// resolve against `base_dir`.
ExperimentConfig ParseExperimentConfig(std::string_view text, const std::string& source,
                                       const std::string& base_dir);
ExperimentConfig LoadExperimentConfig(const std::string& path);
nlohmann::json ExperimentConfigToJson(const ExperimentConfig& config);

// Applies the ablation flags: no_haptics zeroes the haptic and surface
// segments and drops the deformation reward, no_task zeroes the task vector.
std::shared_ptr<const EnvConfig> BuildEnvConfig(const ExperimentConfig& config);
TrainerConfig BuildTrainerConfig(const ExperimentConfig& config);

// Seeds of evaluation episodes; distinct from every training stream.
std::vector<std::uint64_t> EvaluationSeeds(std::uint64_t seed, int episodes);

// CSV numbers use 17 significant digits so values round-trip exactly.
std::string FormatNumber(double value);

inline constexpr int kCsvSchemaVersion = 1;
inline constexpr std::array<std::string_view, 7> kLearningCurveColumns = {
    "iteration", "mean_return", "std_return", "mean_final_progress",
    "mean_max_deformation", "kl", "surrogate_improvement"};
inline constexpr std::array<std::string_view, 5> kEvalCurveColumns = {
    "step", "progress_mean", "progress_std", "max_deformation_mean", "max_deformation_std"};
inline constexpr std::array<std::string_view, 8> kEvalSummaryColumns = {
    "policy", "episodes", "mean_final_progress", "std_final_progress", "mean_max_deformation",
    "std_max_deformation", "mean_return", "std_return"};
inline constexpr std::array<std::string_view, 6> kEvalEpisodeColumns = {
    "episode", "seed", "final_progress", "max_deformation", "return", "diverged"};

std::string CsvHeader(std::span<const std::string_view> columns);
std::string LearningCurveRow(const IterationStats& stats);

// Writes the per-step curve, per-episode and observation-log CSVs of one
// policy into `dir` and returns its summary row.
std::string WriteEvaluation(const std::string& dir, const std::string& policy_name,
                            const EvaluationResult& result);

struct ExperimentManifest {
  std::string experiment_id;
  std::string command;
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;  // one per episode or per iteration batch
  nlohmann::json extra;              // command specific fields
};
nlohmann::json ManifestToJson(const ExperimentManifest& manifest);
void WriteManifest(const std::string& path, const ExperimentManifest& manifest);

// JSON views shared by the server and in-process tooling.
nlohmann::json RewardToJson(const RewardBreakdown& reward);
nlohmann::json DiagnosticsToJson(const StepDiagnostics& diagnostics);
nlohmann::json StepResultToJson(const StepResult& result);
nlohmann::json EnvSpecJson(const EnvConfig& config);

}  // namespace donning

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "donning/env.h"

namespace donning {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Minimal episodic interface the trainer samples from.
struct RlStep {
  std::vector<double> observation;
  double reward = 0.0;
  bool done = false;
  double progress = 0.0;         // task progress after the step (r_p for dressing)
  double max_deformation = 0.0;  // 0 for tasks without cloth
  bool diverged = false;
};

class RlEnvironment {
 public:
  virtual ~RlEnvironment() = default;
  virtual int obs_dim() const = 0;
  virtual int act_dim() const = 0;
  virtual int horizon() const = 0;
  virtual std::vector<double> Reset(std::uint64_t seed) = 0;
  // Actions arrive already clamped to [-1, 1].
  virtual RlStep Step(std::span<const double> action) = 0;
};

using EnvFactory = std::function<std::unique_ptr<RlEnvironment>()>;

class DressingRlEnv : public RlEnvironment {
 public:
  explicit DressingRlEnv(std::shared_ptr<const EnvConfig> config) : env_(std::move(config)) {}
  int obs_dim() const override { return kObservationSize; }
  int act_dim() const override { return kActuatedCount; }
  int horizon() const override { return env_.config().episode.horizon; }
  std::vector<double> Reset(std::uint64_t seed) override;
  RlStep Step(std::span<const double> action) override;

 private:
  DressingEnv env_;
};

EnvFactory DressingEnvFactory(std::shared_ptr<const EnvConfig> config);

// Planar point mass: position += step * action, start uniform in
// [-1, 1]^2, reward -|position|^2 after each move.
class PointMassEnv : public RlEnvironment {
 public:
  static constexpr double kStep = 0.1;
  static constexpr int kHorizon = 50;

  int obs_dim() const override { return 2; }
  int act_dim() const override { return 2; }
  int horizon() const override { return kHorizon; }
  std::vector<double> Reset(std::uint64_t seed) override;
  RlStep Step(std::span<const double> action) override;

 private:
  double x_ = 0.0, y_ = 0.0;
  int t_ = 0;
};

// Return of the optimal point-mass controller from the start drawn for
// `seed`. Reward is separable and each coordinate's cost only falls as it
// nears zero, so moving each coordinate toward zero by the largest
// allowed step is optimal at every step.
double PointMassOptimalReturn(std::uint64_t seed);

// Gaussian policy with a tanh MLP mean and state-independent log standard
// deviations. Parameters are one flat vector: per layer the row-major
// weight matrix (out x in) then the bias, and finally the log-stds.
class PolicyNet {
 public:
  struct Cache {
    std::vector<MatrixXd> activations;  // [0] = input, then each hidden layer
  };

  PolicyNet() = default;
  PolicyNet(int obs_dim, int act_dim, std::vector<int> hidden, std::uint64_t seed,
            double init_log_std = 0.0);

  int obs_dim() const { return obs_dim_; }
  int act_dim() const { return act_dim_; }
  const std::vector<int>& hidden() const { return hidden_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  const VectorXd& params() const { return params_; }
  // Throws UsageError on a size mismatch.
  void set_params(const VectorXd& params);
  VectorXd log_std() const { return params_.tail(act_dim_); }

  // Rows of `obs` are observations; returns the action means row-wise.
  MatrixXd MeanBatch(const MatrixXd& obs, Cache* cache = nullptr) const;
  VectorXd Mean(std::span<const double> obs) const;

  // Gradient of sum_i <dmean_i, mean_i> with respect to all parameters
  // (log-std entries are zero).
  VectorXd BackpropMean(const Cache& cache, const MatrixXd& dmean) const;
  // Directional derivative of the means along parameter direction v.
  MatrixXd MeanJvp(const Cache& cache, const VectorXd& v) const;

 private:
  int layer_count() const { return static_cast<int>(hidden_.size()) + 1; }
  int layer_in(int l) const { return l == 0 ? obs_dim_ : hidden_[l - 1]; }
  int layer_out(int l) const { return l == layer_count() - 1 ? act_dim_ : hidden_[l]; }
  std::size_t layer_offset(int l) const;

  int obs_dim_ = 0;
  int act_dim_ = 0;
  std::vector<int> hidden_;
  VectorXd params_;
};

// Per-row log density of actions under N(mean, diag(exp(log_std))^2).
VectorXd GaussianLogLikelihood(const MatrixXd& mean, const VectorXd& log_std,
                               const MatrixXd& actions);
// Mean over rows of KL(old || new).
double GaussianMeanKl(const MatrixXd& mean_old, const VectorXd& log_std_old,
                      const MatrixXd& mean_new, const VectorXd& log_std_new);

struct CgResult {
  VectorXd x;
  double residual = 0.0;  // |b - A x|
  int iterations = 0;
};
// Solves A x = b for symmetric positive definite A given as a product.
CgResult ConjugateGradient(const std::function<VectorXd(const VectorXd&)>& apply,
                           const VectorXd& b, int iterations, double tolerance = 1e-10);

// Surrogate objective, its gradient and the KL Fisher product for a fixed
// batch, all relative to the policy that collected it.
class SurrogateProblem {
 public:
  SurrogateProblem(const PolicyNet& policy, MatrixXd observations, MatrixXd actions,
                   VectorXd advantages);

  // mean(exp(logp_theta - logp_old) * A)
  double Surrogate(const VectorXd& params) const;
  // Gradient of the surrogate at the old parameters.
  VectorXd Gradient() const;
  double MeanKl(const VectorXd& params) const;
  // Hessian of the mean KL at the old parameters applied to v.
  VectorXd FisherProduct(const VectorXd& v) const;
  const PolicyNet& policy() const { return policy_; }

 private:
  PolicyNet policy_;
  MatrixXd obs_, actions_;
  VectorXd adv_;
  PolicyNet::Cache cache_;
  MatrixXd mean_old_;
  VectorXd logp_old_;
};

struct TrpoConfig {
  double kl_step = 0.01;
  int cg_iterations = 10;
  double cg_damping = 1e-5;
  double backtrack_ratio = 0.8;
  int max_backtracks = 15;
};

struct TrpoDiagnostics {
  bool accepted = false;
  bool skipped = false;  // non-finite gradient
  int backtracks = 0;
  double surrogate_improvement = 0.0;
  double kl = 0.0;
  double cg_residual = 0.0;
  double expected_improvement = 0.0;
};

TrpoDiagnostics TrpoStep(PolicyNet& policy, const MatrixXd& observations,
                         const MatrixXd& actions, const VectorXd& advantages,
                         const TrpoConfig& config);

// Least-squares value baseline on [o, o^2, t, t^2, t^3, 1] with o clipped
// to [-10, 10] and t = step / 100.
class LinearBaseline {
 public:
  LinearBaseline() = default;
  explicit LinearBaseline(int obs_dim) : obs_dim_(obs_dim) {}

  int obs_dim() const { return obs_dim_; }
  int feature_count() const { return 2 * obs_dim_ + 4; }
  bool fitted() const { return weights_.size() > 0; }
  const VectorXd& weights() const { return weights_; }
  void set_weights(const VectorXd& w);

  MatrixXd Features(const MatrixXd& observations) const;
  // Zero until the first fit.
  VectorXd Predict(const MatrixXd& observations) const;
  // Ridge fit; keeps the previous weights when they reach a lower squared
  // error on this same data. Returns true if the weights changed.
  bool Fit(const std::vector<MatrixXd>& observations, const std::vector<VectorXd>& returns);

 private:
  int obs_dim_ = 0;
  VectorXd weights_;
};

struct Trajectory {
  std::uint64_t seed = 0;
  MatrixXd observations;  // T x obs_dim, observation before each action
  MatrixXd actions;       // T x act_dim, unclamped samples
  VectorXd rewards;
  std::vector<double> progress;
  std::vector<double> max_deformation;
  bool diverged = false;
  int length() const { return static_cast<int>(rewards.size()); }
};

// ceil(budget / horizon) complete episodes; seeds give one per trajectory.
int TrajectoryCount(int budget, int horizon);

// Rolls out the stochastic policy, one trajectory per seed. Results are
// ordered by seed index regardless of the worker count.
std::vector<Trajectory> SampleRollouts(const PolicyNet& policy, const EnvFactory& factory,
                                       std::span<const std::uint64_t> seeds, int workers);

VectorXd DiscountedReturns(const VectorXd& rewards, double gamma);

// Returns minus baseline, standardized over the whole batch.
VectorXd ComputeAdvantages(const std::vector<Trajectory>& batch, const LinearBaseline& baseline,
                           double gamma);

struct TrainerConfig {
  double gamma = 0.995;
  TrpoConfig trpo;
  int samples_per_iter = 5000;
  int iterations = 100;
  std::vector<int> hidden = {64, 64};
  double init_log_std = 0.0;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct IterationStats {
  int iteration = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_final_progress = 0.0;
  double mean_max_deformation = 0.0;
  TrpoDiagnostics step;
  int trajectories = 0;
  int samples = 0;
};

struct Checkpoint {
  PolicyNet policy;
  LinearBaseline baseline;
  int next_iteration = 0;
  int horizon = 0;
  nlohmann::json config;  // echo of the run configuration
};

// Versioned little-endian binary format ("DNCK").
void SaveCheckpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws IncompatibleCheckpointError for a foreign or corrupt file.
Checkpoint LoadCheckpoint(const std::string& path);
// Throws IncompatibleCheckpointError when shapes or horizon differ.
void CheckCompatible(const Checkpoint& checkpoint, int obs_dim, int act_dim, int horizon);

class Trainer {
 public:
  Trainer(EnvFactory factory, TrainerConfig config);
  // Continues from a checkpoint; the next iteration index comes from it.
  Trainer(EnvFactory factory, TrainerConfig config, const Checkpoint& resume);

  IterationStats RunIteration();
  const PolicyNet& policy() const { return policy_; }
  const LinearBaseline& baseline() const { return baseline_; }
  int iteration() const { return iteration_; }
  int horizon() const { return horizon_; }
  Checkpoint MakeCheckpoint(nlohmann::json config_echo = {}) const;

  // Seeds of the trajectories sampled at `iteration`.
  std::vector<std::uint64_t> IterationSeeds(int iteration) const;

 private:
  EnvFactory factory_;
  TrainerConfig config_;
  PolicyNet policy_;
  LinearBaseline baseline_;
  int iteration_ = 0;
  int horizon_ = 0;
};

// Deterministic mean actions of a policy, for evaluation.
PolicyFactory MeanPolicy(const PolicyNet& policy);

}  // namespace donning

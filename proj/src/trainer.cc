#include "donning/trainer.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "donning/errors.h"
#include "donning/parallel.h"

namespace donning {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kLog2Pi = 1.8378770664093454836;

MatrixXd Stack(const std::vector<const MatrixXd*>& parts, int cols) {
  Eigen::Index rows = 0;
  for (const MatrixXd* p : parts) rows += p->rows();
  MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const MatrixXd* p : parts) {
    out.middleRows(r, p->rows()) = *p;
    r += p->rows();
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- envs

std::vector<double> DressingRlEnv::Reset(std::uint64_t seed) {
  return env_.Reset(seed).observation.values;
}

RlStep DressingRlEnv::Step(std::span<const double> action) {
  StepResult r = env_.Step(action);
  RlStep out;
  out.observation = std::move(r.observation.values);
  out.reward = r.reward.total;
  out.done = r.done;
  out.progress = r.reward.r_p;
  out.max_deformation = r.reward.max_deformation;
  out.diverged = r.diagnostics.diverged;
  return out;
}

EnvFactory DressingEnvFactory(std::shared_ptr<const EnvConfig> config) {
  return [config]() -> std::unique_ptr<RlEnvironment> {
    return std::make_unique<DressingRlEnv>(config);
  };
}

std::vector<double> PointMassEnv::Reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  x_ = 2.0 * UnitInterval(rng()) - 1.0;
  y_ = 2.0 * UnitInterval(rng()) - 1.0;
  t_ = 0;
  return {x_, y_};
}

RlStep PointMassEnv::Step(std::span<const double> action) {
  if (action.size() != 2) throw InvalidActionError("point mass takes 2 actions");
  if (t_ >= kHorizon) throw UsageError("step called after the episode ended");
  x_ += kStep * std::clamp(action[0], -1.0, 1.0);
  y_ += kStep * std::clamp(action[1], -1.0, 1.0);
  ++t_;
  RlStep out;
  out.observation = {x_, y_};
  out.reward = -(x_ * x_ + y_ * y_);
  out.done = t_ >= kHorizon;
  out.progress = -std::sqrt(x_ * x_ + y_ * y_);
  return out;
}

double PointMassOptimalReturn(std::uint64_t seed) {
  PointMassEnv env;
  std::vector<double> obs = env.Reset(seed);
  double total = 0.0;
  for (int t = 0; t < PointMassEnv::kHorizon; ++t) {
    double a[2];
    for (int k = 0; k < 2; ++k) {
      a[k] = -std::clamp(obs[k] / PointMassEnv::kStep, -1.0, 1.0);
    }
    RlStep s = env.Step(a);
    total += s.reward;
    obs = s.observation;
  }
  return total;
}

// ---------------------------------------------------------------- policy

PolicyNet::PolicyNet(int obs_dim, int act_dim, std::vector<int> hidden, std::uint64_t seed,
                     double init_log_std)
    : obs_dim_(obs_dim), act_dim_(act_dim), hidden_(std::move(hidden)) {
  if (obs_dim < 1 || act_dim < 1) throw UsageError("policy needs positive dimensions");
  for (int h : hidden_) {
    if (h < 1) throw UsageError("hidden layer sizes must be positive");
  }
  params_ = VectorXd::Zero(static_cast<Eigen::Index>(layer_offset(layer_count()) + act_dim_));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int l = 0; l < layer_count(); ++l) {
    const int out = layer_out(l);
    const int in = layer_in(l);
    // Orthogonal rows or columns from the QR factor of a Gaussian matrix.
    const int big = std::max(out, in);
    const int small = std::min(out, in);
    MatrixXd g(big, small);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<MatrixXd> qr(g);
    MatrixXd q = qr.householderQ() * MatrixXd::Identity(big, small);
    const double gain = l == layer_count() - 1 ? 0.1 : 1.0;
    RowMajor w = out >= in ? RowMajor(q) : RowMajor(q.transpose());
    Eigen::Map<RowMajor>(params_.data() + layer_offset(l), out, in) = gain * w;
  }
  params_.tail(act_dim_).setConstant(init_log_std);
}

std::size_t PolicyNet::layer_offset(int l) const {
  std::size_t off = 0;
  for (int k = 0; k < l; ++k) {
    off += static_cast<std::size_t>(layer_out(k)) * (layer_in(k) + 1);
  }
  return off;
}

void PolicyNet::set_params(const VectorXd& params) {
  if (params.size() != params_.size()) {
    throw UsageError("policy parameter vector has " + std::to_string(params.size()) +
                     " entries, expected " + std::to_string(params_.size()));
  }
  params_ = params;
}

MatrixXd PolicyNet::MeanBatch(const MatrixXd& obs, Cache* cache) const {
  if (obs.cols() != obs_dim_) throw UsageError("observation width does not match the policy");
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(obs);
  }
  MatrixXd a = obs;
  for (int l = 0; l < layer_count(); ++l) {
    const int out = layer_out(l);
    const int in = layer_in(l);
    const std::size_t off = layer_offset(l);
    Eigen::Map<const RowMajor> w(params_.data() + off, out, in);
    Eigen::Map<const VectorXd> b(params_.data() + off + static_cast<std::size_t>(out) * in, out);
    MatrixXd z = a * w.transpose();
    z.rowwise() += b.transpose();
    if (l == layer_count() - 1) return z;
    a = z.array().tanh().matrix();
    if (cache) cache->activations.push_back(a);
  }
  return a;
}

VectorXd PolicyNet::Mean(std::span<const double> obs) const {
  if (static_cast<int>(obs.size()) != obs_dim_) {
    throw UsageError("observation has " + std::to_string(obs.size()) + " entries, policy expects " +
                     std::to_string(obs_dim_));
  }
  MatrixXd row(1, obs_dim_);
  for (int k = 0; k < obs_dim_; ++k) row(0, k) = obs[k];
  return MeanBatch(row).row(0).transpose();
}

VectorXd PolicyNet::BackpropMean(const Cache& cache, const MatrixXd& dmean) const {
  VectorXd grad = VectorXd::Zero(params_.size());
  MatrixXd dz = dmean;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const int out = layer_out(l);
    const int in = layer_in(l);
    const std::size_t off = layer_offset(l);
    const MatrixXd& a_in = cache.activations[l];
    Eigen::Map<RowMajor>(grad.data() + off, out, in) = dz.transpose() * a_in;
    Eigen::Map<VectorXd>(grad.data() + off + static_cast<std::size_t>(out) * in, out) =
        dz.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::Map<const RowMajor> w(params_.data() + off, out, in);
    const MatrixXd da = dz * w;
    dz = da.array() * (1.0 - a_in.array().square());
  }
  return grad;
}

MatrixXd PolicyNet::MeanJvp(const Cache& cache, const VectorXd& v) const {
  MatrixXd da;
  for (int l = 0; l < layer_count(); ++l) {
    const int out = layer_out(l);
    const int in = layer_in(l);
    const std::size_t off = layer_offset(l);
    const std::size_t boff = off + static_cast<std::size_t>(out) * in;
    Eigen::Map<const RowMajor> w(params_.data() + off, out, in);
    Eigen::Map<const RowMajor> dw(v.data() + off, out, in);
    Eigen::Map<const VectorXd> db(v.data() + boff, out);
    MatrixXd dz = cache.activations[l] * dw.transpose();
    if (l > 0) dz += da * w.transpose();
    dz.rowwise() += db.transpose();
    if (l == layer_count() - 1) return dz;
    da = dz.array() * (1.0 - cache.activations[l + 1].array().square());
  }
  return da;
}

VectorXd GaussianLogLikelihood(const MatrixXd& mean, const VectorXd& log_std,
                               const MatrixXd& actions) {
  const Eigen::RowVectorXd inv_std = (-log_std).array().exp().matrix().transpose();
  const MatrixXd z = ((actions - mean).array().rowwise() * inv_std.array()).matrix();
  const double norm = log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * kLog2Pi;
  return (-0.5 * z.array().square().rowwise().sum() - norm).matrix();
}

double GaussianMeanKl(const MatrixXd& mean_old, const VectorXd& log_std_old,
                      const MatrixXd& mean_new, const VectorXd& log_std_new) {
  const Eigen::ArrayXd var_old = (2.0 * log_std_old.array()).exp();
  const Eigen::ArrayXd var_new = (2.0 * log_std_new.array()).exp();
  const double const_part =
      (log_std_new.array() - log_std_old.array() + var_old / (2.0 * var_new) - 0.5).sum();
  const Eigen::RowVectorXd inv_2var = (1.0 / (2.0 * var_new)).matrix().transpose();
  const double quad =
      ((mean_old - mean_new).array().square().rowwise() * inv_2var.array()).sum();
  return const_part + quad / static_cast<double>(mean_old.rows());
}

CgResult ConjugateGradient(const std::function<VectorXd(const VectorXd&)>& apply,
                           const VectorXd& b, int iterations, double tolerance) {
  CgResult out;
  out.x = VectorXd::Zero(b.size());
  VectorXd r = b;
  VectorXd p = r;
  double rr = r.squaredNorm();
  for (int i = 0; i < iterations && rr > tolerance; ++i) {
    const VectorXd ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rr / pap;
    out.x += alpha * p;
    r -= alpha * ap;
    const double next = r.squaredNorm();
    p = r + (next / rr) * p;
    rr = next;
    out.iterations = i + 1;
  }
  out.residual = std::sqrt(rr);
  return out;
}

// ---------------------------------------------------------------- TRPO

SurrogateProblem::SurrogateProblem(const PolicyNet& policy, MatrixXd observations,
                                   MatrixXd actions, VectorXd advantages)
    : policy_(policy),
      obs_(std::move(observations)),
      actions_(std::move(actions)),
      adv_(std::move(advantages)) {
  if (obs_.rows() == 0 || obs_.rows() != actions_.rows() || obs_.rows() != adv_.size()) {
    throw UsageError("surrogate batch needs matching, non-empty rows");
  }
  mean_old_ = policy_.MeanBatch(obs_, &cache_);
  logp_old_ = GaussianLogLikelihood(mean_old_, policy_.log_std(), actions_);
}

double SurrogateProblem::Surrogate(const VectorXd& params) const {
  PolicyNet p = policy_;
  p.set_params(params);
  const VectorXd logp = GaussianLogLikelihood(p.MeanBatch(obs_), p.log_std(), actions_);
  return ((logp - logp_old_).array().exp() * adv_.array()).mean();
}

VectorXd SurrogateProblem::Gradient() const {
  const double n = static_cast<double>(obs_.rows());
  const VectorXd log_std = policy_.log_std();
  const Eigen::RowVectorXd inv_var = (-2.0 * log_std.array()).exp().matrix().transpose();
  const MatrixXd diff = actions_ - mean_old_;
  MatrixXd dmean = (diff.array().rowwise() * inv_var.array()).matrix();
  dmean = (dmean.array().colwise() * (adv_.array() / n)).matrix();
  VectorXd g = policy_.BackpropMean(cache_, dmean);
  const MatrixXd z2 = (diff.array().square().rowwise() * inv_var.array()).matrix();
  g.tail(policy_.act_dim()) =
      ((z2.array() - 1.0).colwise() * adv_.array()).colwise().sum().transpose() / n;
  return g;
}

double SurrogateProblem::MeanKl(const VectorXd& params) const {
  PolicyNet p = policy_;
  p.set_params(params);
  return GaussianMeanKl(mean_old_, policy_.log_std(), p.MeanBatch(obs_), p.log_std());
}

VectorXd SurrogateProblem::FisherProduct(const VectorXd& v) const {
  const double n = static_cast<double>(obs_.rows());
  const Eigen::RowVectorXd inv_var =
      (-2.0 * policy_.log_std().array()).exp().matrix().transpose();
  const MatrixXd jv = policy_.MeanJvp(cache_, v);
  const MatrixXd weighted = ((jv.array().rowwise() * inv_var.array()) / n).matrix();
  VectorXd out = policy_.BackpropMean(cache_, weighted);
  out.tail(policy_.act_dim()) = 2.0 * v.tail(policy_.act_dim());
  return out;
}

TrpoDiagnostics TrpoStep(PolicyNet& policy, const MatrixXd& observations, const MatrixXd& actions,
                         const VectorXd& advantages, const TrpoConfig& config) {
  TrpoDiagnostics diag;
  const SurrogateProblem problem(policy, observations, actions, advantages);
  const VectorXd g = problem.Gradient();
  if (!g.allFinite()) {
    diag.skipped = true;
    return diag;
  }
  auto apply = [&](const VectorXd& v) -> VectorXd {
    return problem.FisherProduct(v) + config.cg_damping * v;
  };
  const CgResult cg = ConjugateGradient(apply, g, config.cg_iterations);
  diag.cg_residual = cg.residual;
  const double shs = cg.x.dot(apply(cg.x));
  if (!(shs > 0.0) || !std::isfinite(shs) || !cg.x.allFinite()) {
    diag.skipped = true;
    return diag;
  }
  const VectorXd full = std::sqrt(2.0 * config.kl_step / shs) * cg.x;
  diag.expected_improvement = g.dot(full);

  const VectorXd old = policy.params();
  const double base = problem.Surrogate(old);
  double scale = 1.0;
  for (int k = 0; k < config.max_backtracks; ++k, scale *= config.backtrack_ratio) {
    const VectorXd candidate = old + scale * full;
    const double value = problem.Surrogate(candidate);
    const double kl = problem.MeanKl(candidate);
    if (std::isfinite(value) && std::isfinite(kl) && value > base && kl <= config.kl_step) {
      policy.set_params(candidate);
      diag.accepted = true;
      diag.backtracks = k;
      diag.kl = kl;
      diag.surrogate_improvement = value - base;
      return diag;
    }
  }
  diag.backtracks = config.max_backtracks;
  return diag;
}

// ---------------------------------------------------------------- baseline

void LinearBaseline::set_weights(const VectorXd& w) {
  if (w.size() != 0 && w.size() != feature_count()) {
    throw UsageError("baseline weight vector has the wrong size");
  }
  weights_ = w;
}

MatrixXd LinearBaseline::Features(const MatrixXd& observations) const {
  const Eigen::Index n = observations.rows();
  const int d = obs_dim_;
  MatrixXd f(n, feature_count());
  const MatrixXd o = observations.cwiseMax(-10.0).cwiseMin(10.0);
  f.leftCols(d) = o;
  f.middleCols(d, d) = o.array().square().matrix();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 100.0;
    f(i, 2 * d) = t;
    f(i, 2 * d + 1) = t * t;
    f(i, 2 * d + 2) = t * t * t;
    f(i, 2 * d + 3) = 1.0;
  }
  return f;
}

VectorXd LinearBaseline::Predict(const MatrixXd& observations) const {
  if (!fitted()) return VectorXd::Zero(observations.rows());
  return Features(observations) * weights_;
}

bool LinearBaseline::Fit(const std::vector<MatrixXd>& observations,
                         const std::vector<VectorXd>& returns) {
  std::vector<MatrixXd> feats;
  Eigen::Index rows = 0;
  for (const MatrixXd& o : observations) {
    feats.push_back(Features(o));
    rows += o.rows();
  }
  if (rows == 0) return false;
  std::vector<const MatrixXd*> parts;
  for (const MatrixXd& f : feats) parts.push_back(&f);
  const MatrixXd x = Stack(parts, feature_count());
  VectorXd y(rows);
  Eigen::Index r = 0;
  for (const VectorXd& ret : returns) {
    y.segment(r, ret.size()) = ret;
    r += ret.size();
  }
  const MatrixXd xtx = x.transpose() * x;
  const VectorXd xty = x.transpose() * y;
  VectorXd w;
  double reg = 1e-5;
  for (int attempt = 0; attempt < 5; ++attempt, reg *= 10.0) {
    const MatrixXd a = xtx + reg * MatrixXd::Identity(xtx.rows(), xtx.cols());
    w = a.ldlt().solve(xty);
    if (w.allFinite()) break;
  }
  if (!w.allFinite()) return false;
  const double new_mse = (x * w - y).squaredNorm();
  const double old_mse = fitted() ? (x * weights_ - y).squaredNorm() : y.squaredNorm();
  if (new_mse > old_mse) return false;
  weights_ = w;
  return true;
}

// ---------------------------------------------------------------- sampling

int TrajectoryCount(int budget, int horizon) {
  if (budget < horizon) throw UsageError("sample budget must cover at least one horizon");
  return (budget + horizon - 1) / horizon;
}

std::vector<Trajectory> SampleRollouts(const PolicyNet& policy, const EnvFactory& factory,
                                       std::span<const std::uint64_t> seeds, int workers) {
  std::vector<Trajectory> out(seeds.size());
  const VectorXd std_dev = policy.log_std().array().exp();
  ParallelFor(static_cast<int>(seeds.size()), workers, [&](int i) {
    std::unique_ptr<RlEnvironment> env = factory();
    const int h = env->horizon();
    Trajectory& tr = out[i];
    tr.seed = seeds[i];
    tr.observations.resize(h, env->obs_dim());
    tr.actions.resize(h, env->act_dim());
    tr.rewards.resize(h);
    std::mt19937_64 rng(MixSeed(seeds[i], 0x414354));
    std::normal_distribution<double> normal;
    std::vector<double> obs = env->Reset(seeds[i]);
    std::vector<double> clamped(env->act_dim());
    int t = 0;
    while (t < h) {
      for (int k = 0; k < env->obs_dim(); ++k) tr.observations(t, k) = obs[k];
      const VectorXd mean = policy.Mean(obs);
      for (int k = 0; k < env->act_dim(); ++k) {
        const double a = mean[k] + std_dev[k] * normal(rng);
        tr.actions(t, k) = a;
        clamped[k] = std::clamp(a, -1.0, 1.0);
      }
      RlStep s = env->Step(clamped);
      tr.rewards[t] = s.reward;
      tr.progress.push_back(s.progress);
      tr.max_deformation.push_back(s.max_deformation);
      tr.diverged = tr.diverged || s.diverged;
      obs = std::move(s.observation);
      ++t;
      if (s.done) break;
    }
    tr.observations.conservativeResize(t, Eigen::NoChange);
    tr.actions.conservativeResize(t, Eigen::NoChange);
    tr.rewards.conservativeResize(t);
  });
  return out;
}

VectorXd DiscountedReturns(const VectorXd& rewards, double gamma) {
  VectorXd out(rewards.size());
  double acc = 0.0;
  for (Eigen::Index t = rewards.size() - 1; t >= 0; --t) {
    acc = rewards[t] + gamma * acc;
    out[t] = acc;
  }
  return out;
}

VectorXd ComputeAdvantages(const std::vector<Trajectory>& batch, const LinearBaseline& baseline,
                           double gamma) {
  Eigen::Index rows = 0;
  for (const Trajectory& tr : batch) rows += tr.length();
  VectorXd adv(rows);
  Eigen::Index r = 0;
  for (const Trajectory& tr : batch) {
    adv.segment(r, tr.length()) =
        DiscountedReturns(tr.rewards, gamma) - baseline.Predict(tr.observations);
    r += tr.length();
  }
  if (rows == 0) return adv;
  const double mean = adv.mean();
  const double stddev = std::sqrt((adv.array() - mean).square().mean());
  return ((adv.array() - mean) / (stddev + 1e-8)).matrix();
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(EnvFactory factory, TrainerConfig config)
    : factory_(std::move(factory)), config_(std::move(config)) {
  if (!(config_.trpo.kl_step > 0.0)) throw ConfigError("kl_step must be positive");
  if (!(config_.gamma > 0.0 && config_.gamma < 1.0)) throw ConfigError("gamma must be in (0, 1)");
  const std::unique_ptr<RlEnvironment> probe = factory_();
  horizon_ = probe->horizon();
  TrajectoryCount(config_.samples_per_iter, horizon_);
  policy_ = PolicyNet(probe->obs_dim(), probe->act_dim(), config_.hidden,
                      MixSeed(config_.seed, 0x504f4c), config_.init_log_std);
  baseline_ = LinearBaseline(probe->obs_dim());
}

Trainer::Trainer(EnvFactory factory, TrainerConfig config, const Checkpoint& resume)
    : Trainer(std::move(factory), std::move(config)) {
  CheckCompatible(resume, policy_.obs_dim(), policy_.act_dim(), horizon_);
  if (resume.policy.hidden() != policy_.hidden()) {
    throw IncompatibleCheckpointError("checkpoint hidden layers differ from the configuration");
  }
  policy_ = resume.policy;
  baseline_ = resume.baseline;
  iteration_ = resume.next_iteration;
}

std::vector<std::uint64_t> Trainer::IterationSeeds(int iteration) const {
  const int n = TrajectoryCount(config_.samples_per_iter, horizon_);
  const std::uint64_t base = MixSeed(config_.seed, static_cast<std::uint64_t>(iteration) + 1);
  std::vector<std::uint64_t> seeds(n);
  for (int j = 0; j < n; ++j) seeds[j] = MixSeed(base, static_cast<std::uint64_t>(j));
  return seeds;
}

IterationStats Trainer::RunIteration() {
  IterationStats stats;
  stats.iteration = iteration_;
  const std::vector<std::uint64_t> seeds = IterationSeeds(iteration_);
  const std::vector<Trajectory> batch = SampleRollouts(policy_, factory_, seeds, config_.workers);

  const VectorXd adv = ComputeAdvantages(batch, baseline_, config_.gamma);
  std::vector<MatrixXd> obs;
  std::vector<VectorXd> returns;
  std::vector<const MatrixXd*> obs_parts, act_parts;
  std::vector<double> totals, finals, maxima;
  for (const Trajectory& tr : batch) {
    obs.push_back(tr.observations);
    returns.push_back(DiscountedReturns(tr.rewards, config_.gamma));
    obs_parts.push_back(&tr.observations);
    act_parts.push_back(&tr.actions);
    totals.push_back(tr.rewards.sum());
    finals.push_back(tr.progress.empty() ? 0.0 : tr.progress.back());
    maxima.push_back(tr.max_deformation.empty()
                         ? 0.0
                         : *std::max_element(tr.max_deformation.begin(), tr.max_deformation.end()));
    stats.samples += tr.length();
  }
  stats.trajectories = static_cast<int>(batch.size());
  MeanStd(totals, stats.mean_return, stats.std_return);
  double unused = 0.0;
  MeanStd(finals, stats.mean_final_progress, unused);
  MeanStd(maxima, stats.mean_max_deformation, unused);

  baseline_.Fit(obs, returns);
  const MatrixXd all_obs = Stack(obs_parts, policy_.obs_dim());
  const MatrixXd all_act = Stack(act_parts, policy_.act_dim());
  stats.step = TrpoStep(policy_, all_obs, all_act, adv, config_.trpo);
  ++iteration_;
  return stats;
}

Checkpoint Trainer::MakeCheckpoint(nlohmann::json config_echo) const {
  Checkpoint c;
  c.policy = policy_;
  c.baseline = baseline_;
  c.next_iteration = iteration_;
  c.horizon = horizon_;
  c.config = std::move(config_echo);
  return c;
}

PolicyFactory MeanPolicy(const PolicyNet& policy) {
  auto shared = std::make_shared<const PolicyNet>(policy);
  return [shared](std::uint64_t) -> ActionFn {
    return [shared](const Observation& obs) {
      const VectorXd m = shared->Mean(obs.values);
      return std::vector<double>(m.data(), m.data() + m.size());
    };
  };
}

// ---------------------------------------------------------------- checkpoints

namespace {

constexpr char kCheckpointMagic[4] = {'D', 'N', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void U32(std::uint32_t v) { Bytes(v, 4); }
  void U64(std::uint64_t v) { Bytes(v, 8); }
  void F64(double v) { U64(std::bit_cast<std::uint64_t>(v)); }

 private:
  void Bytes(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.put(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::string& path) : in_(in), path_(path) {}
  std::uint32_t U32() { return static_cast<std::uint32_t>(Bytes(4)); }
  std::uint64_t U64() { return Bytes(8); }
  double F64() { return std::bit_cast<double>(U64()); }
  std::uint64_t Count(std::uint64_t limit) {
    const std::uint64_t n = U64();
    if (n > limit) Fail("implausible length field");
    return n;
  }
  [[noreturn]] void Fail(const std::string& what) {
    throw IncompatibleCheckpointError(path_ + ": " + what);
  }

 private:
  std::uint64_t Bytes(int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      const int c = in_.get();
      if (c == std::char_traits<char>::eof()) Fail("truncated checkpoint");
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
  }
  std::ifstream& in_;
  std::string path_;
};

}  // namespace

void SaveCheckpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  Writer w(out);
  out.write(kCheckpointMagic, 4);
  w.U32(kCheckpointVersion);
  w.U32(static_cast<std::uint32_t>(c.policy.obs_dim()));
  w.U32(static_cast<std::uint32_t>(c.policy.act_dim()));
  w.U32(static_cast<std::uint32_t>(c.policy.hidden().size()));
  for (int h : c.policy.hidden()) w.U32(static_cast<std::uint32_t>(h));
  w.U32(static_cast<std::uint32_t>(c.horizon));
  w.U64(static_cast<std::uint64_t>(c.next_iteration));
  w.U64(static_cast<std::uint64_t>(c.policy.param_count()));
  for (double v : c.policy.params()) w.F64(v);
  w.U32(static_cast<std::uint32_t>(c.baseline.obs_dim()));
  w.U64(static_cast<std::uint64_t>(c.baseline.weights().size()));
  for (double v : c.baseline.weights()) w.F64(v);
  const std::string echo = c.config.is_null() ? std::string() : c.config.dump();
  w.U64(echo.size());
  out.write(echo.data(), static_cast<std::streamsize>(echo.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  Reader r(in, path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kCheckpointMagic)) r.Fail("not a checkpoint file");
  if (r.U32() != kCheckpointVersion) r.Fail("unsupported checkpoint version");
  const int obs_dim = static_cast<int>(r.U32());
  const int act_dim = static_cast<int>(r.U32());
  const std::uint32_t layers = r.U32();
  if (layers > 64) r.Fail("implausible layer count");
  std::vector<int> hidden(layers);
  for (int& h : hidden) h = static_cast<int>(r.U32());
  Checkpoint c;
  c.horizon = static_cast<int>(r.U32());
  c.next_iteration = static_cast<int>(r.U64());
  try {
    c.policy = PolicyNet(obs_dim, act_dim, hidden, 0);
  } catch (const UsageError& e) {
    r.Fail(e.what());
  }
  const std::uint64_t n = r.Count(1u << 28);
  if (n != static_cast<std::uint64_t>(c.policy.param_count())) {
    r.Fail("parameter count does not match the layer sizes");
  }
  VectorXd params(static_cast<Eigen::Index>(n));
  for (double& v : params) v = r.F64();
  c.policy.set_params(params);
  c.baseline = LinearBaseline(static_cast<int>(r.U32()));
  const std::uint64_t nb = r.Count(1u << 28);
  VectorXd w(static_cast<Eigen::Index>(nb));
  for (double& v : w) v = r.F64();
  try {
    c.baseline.set_weights(w);
  } catch (const UsageError& e) {
    r.Fail(e.what());
  }
  const std::uint64_t len = r.Count(1u << 26);
  std::string echo(len, '\0');
  in.read(echo.data(), static_cast<std::streamsize>(len));
  if (!in) r.Fail("truncated checkpoint");
  if (!echo.empty()) {
    try {
      c.config = nlohmann::json::parse(echo);
    } catch (const nlohmann::json::exception&) {
      r.Fail("corrupt configuration echo");
    }
  }
  return c;
}

void CheckCompatible(const Checkpoint& c, int obs_dim, int act_dim, int horizon) {
  if (c.policy.obs_dim() != obs_dim || c.policy.act_dim() != act_dim) {
    throw IncompatibleCheckpointError(
        "checkpoint policy maps " + std::to_string(c.policy.obs_dim()) + " -> " +
        std::to_string(c.policy.act_dim()) + " but the environment has " + std::to_string(obs_dim) +
        " observations and " + std::to_string(act_dim) + " actions");
  }
  if (c.horizon != horizon) {
    throw IncompatibleCheckpointError("checkpoint horizon " + std::to_string(c.horizon) +
                                      " differs from the environment horizon " +
                                      std::to_string(horizon));
  }
}

}  // namespace donning

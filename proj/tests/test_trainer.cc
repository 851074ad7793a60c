#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "donning/errors.h"
#include "donning/trainer.h"
#include "oracles.h"

using namespace donning;

namespace {

MatrixXd RandomMatrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

struct Batch {
  PolicyNet policy;
  MatrixXd obs, actions;
  VectorXd adv;
};

Batch TinyBatch(std::uint64_t seed, int rows = 64) {
  std::mt19937_64 rng(seed);
  Batch b;
  b.policy = PolicyNet(3, 2, {5}, seed, -0.3);
  b.obs = RandomMatrix(rows, 3, rng);
  b.actions = b.policy.MeanBatch(b.obs) + 0.7 * RandomMatrix(rows, 2, rng);
  b.adv = RandomMatrix(rows, 1, rng).col(0);
  return b;
}

// Independent closed form of KL(old || new) for diagonal Gaussians.
double KlOracle(const MatrixXd& m0, const VectorXd& ls0, const MatrixXd& m1, const VectorXd& ls1) {
  double total = 0.0;
  for (int i = 0; i < m0.rows(); ++i) {
    for (int k = 0; k < m0.cols(); ++k) {
      const double v0 = std::exp(2 * ls0[k]), v1 = std::exp(2 * ls1[k]);
      const double d = m0(i, k) - m1(i, k);
      total += 0.5 * (v0 / v1 + d * d / v1 - 1.0 + std::log(v1 / v0));
    }
  }
  return total / static_cast<double>(m0.rows());
}

double PointMassOptimumOracle(std::uint64_t seed) {
  PointMassEnv env;
  const std::vector<double> start = env.Reset(seed);
  double total = 0.0;
  for (int t = 1; t <= PointMassEnv::kHorizon; ++t) {
    for (double s : start) {
      const double left = std::max(std::abs(s) - 0.1 * t, 0.0);
      total -= left * left;
    }
  }
  return total;
}

double PointMassReturn(const std::function<std::vector<double>(const std::vector<double>&)>& act,
                       std::uint64_t seed) {
  PointMassEnv env;
  std::vector<double> obs = env.Reset(seed);
  double total = 0.0;
  for (int t = 0; t < PointMassEnv::kHorizon; ++t) {
    std::vector<double> a = act(obs);
    for (double& x : a) x = std::clamp(x, -1.0, 1.0);
    const RlStep s = env.Step(a);
    total += s.reward;
    obs = s.observation;
  }
  return total;
}

}  // namespace

TEST_CASE("conjugate gradient matches a dense Cholesky solve") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 12 + 4 * trial;
    const MatrixXd g = RandomMatrix(n, n, rng);
    const MatrixXd a = g * g.transpose() + 0.5 * MatrixXd::Identity(n, n);
    const VectorXd b = RandomMatrix(n, 1, rng).col(0);
    const CgResult cg = ConjugateGradient([&](const VectorXd& v) { return VectorXd(a * v); }, b,
                                          4 * n, 1e-14);
    std::vector<std::vector<double>> dense(n, std::vector<double>(n));
    std::vector<double> rhs(n);
    for (int i = 0; i < n; ++i) {
      rhs[i] = b[i];
      for (int j = 0; j < n; ++j) dense[i][j] = a(i, j);
    }
    const std::vector<double> want = oracle::CholeskySolve(dense, rhs);
    double err = 0.0, norm = 0.0;
    for (int i = 0; i < n; ++i) {
      err += (cg.x[i] - want[i]) * (cg.x[i] - want[i]);
      norm += want[i] * want[i];
    }
    CHECK(std::sqrt(err / norm) <= 1e-6);
    CHECK(cg.residual == doctest::Approx((b - a * cg.x).norm()).epsilon(1e-6));
  }
}

TEST_CASE("Fisher-vector product matches the explicit Fisher matrix") {
  const Batch b = TinyBatch(3);
  const SurrogateProblem problem(b.policy, b.obs, b.actions, b.adv);
  const int p = b.policy.param_count();
  const int mean_params = p - 2;
  const VectorXd theta = b.policy.params();
  const VectorXd ls = b.policy.log_std();

  // Mean Jacobian per row by central differences of the forward pass.
  std::vector<MatrixXd> jac(b.obs.rows(), MatrixXd::Zero(2, p));
  const double h = 1e-6;
  for (int j = 0; j < mean_params; ++j) {
    PolicyNet plus = b.policy, minus = b.policy;
    VectorXd tp = theta, tm = theta;
    tp[j] += h;
    tm[j] -= h;
    plus.set_params(tp);
    minus.set_params(tm);
    const MatrixXd d = (plus.MeanBatch(b.obs) - minus.MeanBatch(b.obs)) / (2 * h);
    for (int i = 0; i < b.obs.rows(); ++i) jac[i].col(j) = d.row(i).transpose();
  }
  MatrixXd fisher = MatrixXd::Zero(p, p);
  for (const MatrixXd& j : jac) {
    for (int k = 0; k < 2; ++k) {
      fisher += j.row(k).transpose() * j.row(k) * std::exp(-2 * ls[k]);
    }
  }
  fisher /= static_cast<double>(b.obs.rows());
  // Log-std block of a Gaussian: 2 per action dimension.
  fisher(p - 2, p - 2) += 2.0;
  fisher(p - 1, p - 1) += 2.0;

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const VectorXd v = RandomMatrix(p, 1, rng).col(0);
    const VectorXd got = problem.FisherProduct(v);
    const VectorXd want = fisher * v;
    CHECK((got - want).norm() <= 1e-5 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("surrogate gradient matches finite differences") {
  for (std::uint64_t seed : {4, 5, 6}) {
    const Batch b = TinyBatch(seed);
    const SurrogateProblem problem(b.policy, b.obs, b.actions, b.adv);
    const VectorXd g = problem.Gradient();
    const VectorXd theta = b.policy.params();
    VectorXd fd(theta.size());
    const double h = 1e-5;
    for (int j = 0; j < theta.size(); ++j) {
      VectorXd tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      fd[j] = (problem.Surrogate(tp) - problem.Surrogate(tm)) / (2 * h);
    }
    CHECK((g - fd).norm() <= 1e-4 * fd.norm());
    // At the collecting policy the ratio is one.
    CHECK(problem.Surrogate(theta) == doctest::Approx(b.adv.mean()).epsilon(1e-12));
    CHECK(problem.MeanKl(theta) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  }
}

TEST_CASE("Gaussian likelihood and KL against closed forms") {
  std::mt19937_64 rng(12);
  const MatrixXd m0 = RandomMatrix(10, 3, rng), m1 = RandomMatrix(10, 3, rng);
  const VectorXd ls0 = RandomMatrix(3, 1, rng, 0.3).col(0), ls1 = RandomMatrix(3, 1, rng, 0.3).col(0);
  CHECK(GaussianMeanKl(m0, ls0, m1, ls1) == doctest::Approx(KlOracle(m0, ls0, m1, ls1)).epsilon(1e-12));
  const MatrixXd a = RandomMatrix(10, 3, rng);
  const VectorXd lp = GaussianLogLikelihood(m0, ls0, a);
  for (int i = 0; i < 10; ++i) {
    double want = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double s = std::exp(ls0[k]);
      want += -0.5 * std::pow((a(i, k) - m0(i, k)) / s, 2) - std::log(s) - 0.5 * std::log(2 * M_PI);
    }
    CHECK(lp[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("accepted TRPO steps respect the KL bound and improve the surrogate") {
  int accepted = 0;
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    Batch b = TinyBatch(seed, 200);
    const PolicyNet before = b.policy;
    const SurrogateProblem problem(before, b.obs, b.actions, b.adv);
    TrpoConfig cfg;
    const TrpoDiagnostics d = TrpoStep(b.policy, b.obs, b.actions, b.adv, cfg);
    const double kl = KlOracle(before.MeanBatch(b.obs), before.log_std(), b.policy.MeanBatch(b.obs),
                               b.policy.log_std());
    if (d.accepted) {
      ++accepted;
      CHECK(kl <= cfg.kl_step);
      CHECK(kl == doctest::Approx(d.kl).epsilon(1e-9));
      CHECK(problem.Surrogate(b.policy.params()) > problem.Surrogate(before.params()));
    } else {
      CHECK(b.policy.params() == before.params());
    }
  }
  CHECK(accepted >= 8);
}

TEST_CASE("returns, advantages and trajectory counts") {
  VectorXd r(3);
  r << 1.0, 1.0, 1.0;
  const VectorXd ret = DiscountedReturns(r, 0.995);
  CHECK(ret[0] == doctest::Approx(2.985025).epsilon(1e-15));
  CHECK(ret[1] == doctest::Approx(1.995).epsilon(1e-15));
  CHECK(ret[2] == 1.0);

  CHECK(TrajectoryCount(5000, 400) == 13);
  CHECK(TrajectoryCount(400, 400) == 1);
  CHECK(TrajectoryCount(401, 400) == 2);
  CHECK_THROWS_AS(TrajectoryCount(1, 400), UsageError);

  std::mt19937_64 rng(2);
  std::vector<Trajectory> batch(4);
  for (auto& t : batch) {
    t.observations = RandomMatrix(25, 3, rng);
    t.rewards = RandomMatrix(25, 1, rng).col(0).array() + 3.0;
  }
  const VectorXd adv = ComputeAdvantages(batch, LinearBaseline(3), 0.99);
  REQUIRE(adv.size() == 100);
  const double mean = adv.mean();
  const double sd = std::sqrt((adv.array() - mean).square().mean());
  CHECK(std::abs(mean) < 1e-12);
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("linear baseline recovers a linear value function") {
  std::mt19937_64 rng(4);
  LinearBaseline base(2);
  CHECK(base.feature_count() == 8);
  std::vector<MatrixXd> obs;
  std::vector<VectorXd> returns;
  VectorXd w(8);
  w << 0.5, -1.0, 0.25, 0.1, 2.0, -0.3, 0.05, 1.5;
  for (int e = 0; e < 6; ++e) {
    MatrixXd o = RandomMatrix(40, 2, rng);
    obs.push_back(o);
    returns.push_back(base.Features(o) * w);
  }
  const MatrixXd f = base.Features(obs[0]);
  CHECK(f(3, 0) == obs[0](3, 0));
  CHECK(f(3, 2) == obs[0](3, 0) * obs[0](3, 0));
  CHECK(f(3, 4) == doctest::Approx(0.03));
  CHECK(f(3, 7) == 1.0);
  CHECK(base.Predict(obs[0]).isZero());
  CHECK(base.Fit(obs, returns));
  for (std::size_t e = 0; e < obs.size(); ++e) {
    CHECK((base.Predict(obs[e]) - returns[e]).norm() <= 1e-3 * returns[e].norm());
  }
  // Clipping of large observations.
  MatrixXd big(1, 2);
  big << 50.0, -50.0;
  CHECK(base.Features(big)(0, 0) == 10.0);
  CHECK(base.Features(big)(0, 3) == 100.0);
}

TEST_CASE("checkpoint round trip and compatibility") {
  const auto dir = std::filesystem::temp_directory_path() / "donning_test_ckpt";
  std::filesystem::create_directories(dir);
  Checkpoint ck;
  ck.policy = PolicyNet(5, 3, {7, 4}, 9, -0.5);
  ck.baseline = LinearBaseline(5);
  VectorXd w = VectorXd::LinSpaced(14, -1.0, 1.0);
  ck.baseline.set_weights(w);
  ck.next_iteration = 17;
  ck.horizon = 400;
  ck.config = {{"experiment_id", "x"}, {"seed", 3}};
  const std::string path = (dir / "a.ckpt").string();
  SaveCheckpoint(path, ck);
  const Checkpoint back = LoadCheckpoint(path);
  CHECK(back.policy.params() == ck.policy.params());
  CHECK(back.policy.hidden() == ck.policy.hidden());
  CHECK(back.baseline.weights() == w);
  CHECK(back.next_iteration == 17);
  CHECK(back.horizon == 400);
  CHECK(back.config == ck.config);
  CHECK_NOTHROW(CheckCompatible(back, 5, 3, 400));
  CHECK_THROWS_AS(CheckCompatible(back, 6, 3, 400), IncompatibleCheckpointError);
  CHECK_THROWS_AS(CheckCompatible(back, 5, 3, 300), IncompatibleCheckpointError);

  // Truncated and foreign files.
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    std::ofstream(dir / "foreign.ckpt", std::ios::binary) << "PK\x03\x04 not a checkpoint";
  }
  CHECK_THROWS_AS(LoadCheckpoint((dir / "short.ckpt").string()), IncompatibleCheckpointError);
  CHECK_THROWS_AS(LoadCheckpoint((dir / "foreign.ckpt").string()), IncompatibleCheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("rollouts do not depend on the worker count") {
  const PolicyNet policy(2, 2, {8}, 1);
  const EnvFactory factory = [] { return std::make_unique<PointMassEnv>(); };
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const auto a = SampleRollouts(policy, factory, seeds, 1);
  const auto b = SampleRollouts(policy, factory, seeds, 3);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].seed == seeds[i]);
    CHECK(a[i].length() == PointMassEnv::kHorizon);
    CHECK(a[i].actions == b[i].actions);
    CHECK(a[i].rewards == b[i].rewards);
  }
}

TEST_CASE("point-mass optimum matches the closed form") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CHECK(PointMassOptimalReturn(seed) == doctest::Approx(PointMassOptimumOracle(seed)).epsilon(1e-12));
  }
}

TEST_CASE("TRPO closes most of the random-to-optimal gap on the point mass") {
  TrainerConfig cfg;
  cfg.samples_per_iter = 2000;
  cfg.iterations = 30;
  cfg.hidden = {16};
  cfg.seed = 5;
  Trainer trainer([] { return std::make_unique<PointMassEnv>(); }, cfg);
  for (int i = 0; i < 30; ++i) trainer.RunIteration();

  const PolicyNet& policy = trainer.policy();
  double trained = 0.0, random = 0.0, best = 0.0;
  const int n = 200;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = 100000 + i;
    trained += PointMassReturn(
        [&](const std::vector<double>& o) {
          const VectorXd m = policy.Mean(o);
          return std::vector<double>(m.data(), m.data() + m.size());
        },
        seed);
    random += PointMassReturn([&](const std::vector<double>&) { return std::vector<double>{u(rng), u(rng)}; },
                              seed);
    best += PointMassOptimumOracle(seed);
  }
  const double closed = (trained - random) / (best - random);
  MESSAGE("gap closed " << closed);
  CHECK(closed >= 0.5);
}

TEST_CASE("sampler and evaluator agree on the random-policy reward") {
  auto cfg = std::make_shared<EnvConfig>(DefaultEnvConfig());
  cfg->episode.horizon = 40;
  // Zero weights and unit standard deviation: the sampler's policy draws
  // N(0, 1) actions regardless of the observation.
  PolicyNet noise(kObservationSize, kActuatedCount, {8}, 1, 0.0);
  noise.set_params(VectorXd::Zero(noise.param_count()));
  const PolicyFactory same = [](std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(seed ^ 0xabcdefULL);
    return [rng](const Observation&) {
      std::normal_distribution<double> n(0.0, 1.0);
      std::vector<double> a(kActuatedCount);
      for (double& x : a) x = std::clamp(n(*rng), -1.0, 1.0);
      return a;
    };
  };
  std::vector<std::uint64_t> train_seeds, eval_seeds;
  for (std::uint64_t i = 0; i < 100; ++i) {
    train_seeds.push_back(1000 + i);
    eval_seeds.push_back(5000 + i);
  }
  const auto batch = SampleRollouts(noise, DressingEnvFactory(cfg), train_seeds, 1);
  double sampled = 0.0;
  for (const Trajectory& t : batch) sampled += t.rewards.sum();
  sampled /= static_cast<double>(batch.size());
  const EvaluationResult r = Evaluate(cfg, same, eval_seeds);
  const double two_sigma = 2.0 * r.return_std / std::sqrt(100.0);
  MESSAGE("sampler " << sampled << " evaluator " << r.return_mean << " +- " << two_sigma);
  CHECK(std::abs(sampled - r.return_mean) <= two_sigma);
}

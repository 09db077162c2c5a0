#include <cmath>
#include <limits>
#include <numbers>

#include <gtest/gtest.h>

#include "mppidk/errors.hpp"
#include "mppidk/mppi.hpp"
#include "mppidk/parallel.hpp"
#include "test_util.hpp"

namespace mppidk {
namespace {

using testing::random_matrix;

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

MppiConfig pendulum_config(int T, int N, double sigma) {
  MppiConfig c;
  c.horizon = T;
  c.num_rollouts = N;
  c.sigma = Matrix::Constant(1, 1, sigma);
  c.lambda = 0.1;
  c.input_bounds = Pendulum().input_bounds();
  return c;
}

// -- weights ----------------------------------------------------------------

TEST(Weights, EqualCostsAreUniform) {
  const Vector w = compute_weights(Vector::Constant(8, 3.7), 0.5);
  for (int i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(w(i), 1.0 / 8.0);
}

TEST(Weights, LogThreeExample) {
  const double lambda = 0.7;
  const Vector w = compute_weights(vec({0.0, lambda * std::log(3.0)}), lambda);
  EXPECT_NEAR(w(0), 0.75, 1e-15);
  EXPECT_NEAR(w(1), 0.25, 1e-15);
}

TEST(Weights, NormalizedAndNonnegative) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Vector S = random_matrix(200, 1, seed, 10.0).cwiseAbs();
    for (double lambda : {1e-3, 0.1, 1.0, 100.0}) {
      const Vector w = compute_weights(S, lambda);
      ASSERT_NEAR(w.sum(), 1.0, 1e-12);
      ASSERT_GE(w.minCoeff(), 0.0);
    }
  }
}

// Exact whenever S + c is itself exact, as for costs on a dyadic grid.
TEST(Weights, ShiftInvarianceIsExact) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Vector S = (random_matrix(64, 1, seed).cwiseAbs() * 1024.0).array().round() / 1024.0;
    for (double c : {1.0, 17.0, 1024.0, -0.5}) {
      ASSERT_EQ(compute_weights((S.array() + c).matrix(), 0.3), compute_weights(S, 0.3))
          << "shift " << c;
    }
  }
}

TEST(Weights, JointScalingIsExact) {
  const Vector S = vec({0.0, 0.5, 1.0, 2.0});
  EXPECT_EQ(compute_weights(4.0 * S, 4.0 * 0.25), compute_weights(S, 0.25));
}

TEST(Weights, TemperatureLimits) {
  const Vector S = vec({3.0, 1.0, 2.0, 5.0});
  const Vector hot = compute_weights(S, 1e9);
  EXPECT_LE((hot.array() - 0.25).abs().maxCoeff(), 1e-8);
  const Vector cold = compute_weights(S, 1e-3);
  EXPECT_NEAR(cold(1), 1.0, 1e-12);

  double prev = 1.0;
  for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const double dev = (compute_weights(S, lambda).array() - 0.25).abs().maxCoeff();
    EXPECT_LE(dev, prev);
    prev = dev;
  }
}

TEST(Weights, InfiniteCostsGetZeroWeight) {
  const Vector w = compute_weights(vec({kInf, 1.0, kInf, 1.0}), 1.0);
  EXPECT_EQ(w, vec({0.0, 0.5, 0.0, 0.5}));
  EXPECT_THROW(compute_weights(vec({kInf, kInf}), 1.0), ControllerError);
}

TEST(Weights, PopulationStd) {
  EXPECT_DOUBLE_EQ(finite_cost_std(vec({1.0, 3.0, kInf})), 1.0);
}

// -- update and warm start --------------------------------------------------

TEST(Update, DegenerateWeighting) {
  const Box bounds{vec({-1.0}), vec({1.0})};
  const Matrix nominal = Matrix::Constant(1, 3, 0.2);
  Matrix noise(1, 6);
  noise << 0.1, 0.2, 0.9, -0.3, -0.1, 0.0;
  const ControlSequence u = update_controls(nominal, noise, vec({0.0, 1.0}), bounds);
  EXPECT_NEAR(u(0, 0), -0.1, 1e-15);
  EXPECT_NEAR(u(0, 1), 0.1, 1e-15);
  EXPECT_NEAR(u(0, 2), 0.2, 1e-15);
  const ControlSequence v = update_controls(nominal, noise, vec({1.0, 0.0}), bounds);
  EXPECT_EQ(v(0, 2), 1.0);
}

TEST(Update, AntitheticNoiseCancels) {
  const Box bounds{vec({-2.0, -2.0}), vec({2.0, 2.0})};
  const Matrix nominal = random_matrix(2, 5, 1, 0.3);
  const Matrix half = random_matrix(2, 15, 2);
  Matrix noise(2, 30);
  noise << half, -half;
  const ControlSequence u = update_controls(nominal, noise, Vector::Constant(6, 1.0 / 6.0), bounds);
  EXPECT_LE((u - nominal).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Update, AlwaysWithinBounds) {
  const Box bounds{vec({-1.0, -0.5}), vec({1.0, 0.5})};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix nominal = random_matrix(2, 10, seed).cwiseMax(-0.5).cwiseMin(0.5);
    const Matrix noise = random_matrix(2, 10 * 16, seed + 100, 3.0);
    const Vector w = compute_weights(random_matrix(16, 1, seed + 200).cwiseAbs(), 0.1);
    const ControlSequence u = update_controls(nominal, noise, w, bounds);
    for (Eigen::Index s = 0; s < u.cols(); ++s) ASSERT_TRUE(bounds.contains(u.col(s)));
  }
}

TEST(WarmStart, ShiftAlgebra) {
  Matrix abc(1, 3);
  abc << 1.0, 2.0, 3.0;
  Matrix expected(1, 3);
  expected << 2.0, 3.0, 3.0;
  EXPECT_EQ(shift_warm_start(abc), expected);
  expected << 2.0, 3.0, 0.0;
  EXPECT_EQ(shift_warm_start(abc, TailInit::kZero), expected);

  const Matrix constant = Matrix::Constant(2, 4, 0.3);
  EXPECT_EQ(shift_warm_start(constant), constant);

  const Matrix u = random_matrix(2, 7, 3);
  Matrix shifted = u;
  for (int k = 0; k < 7; ++k) shifted = shift_warm_start(shifted);
  EXPECT_EQ(shifted, u.col(6).replicate(1, 7));
}

// -- noise and control costs ------------------------------------------------

TEST(Noise, ZeroSigmaIsZero) {
  const MppiConfig c = pendulum_config(5, 10, 0.0);
  EXPECT_EQ(sample_noise(c, 3, 9), Matrix::Zero(1, 50));
}

TEST(Noise, IndependentOfPoolSize) {
  MppiConfig c = pendulum_config(20, 300, 1.0);
  c.sigma = Matrix::Identity(1, 1);
  const Matrix serial = sample_noise(c, 4, 7);
  for (std::size_t threads : {1u, 2u, 8u}) {
    ThreadPool pool(threads);
    EXPECT_EQ(sample_noise(c, 4, 7, &pool), serial);
  }
  EXPECT_NE(sample_noise(c, 5, 7), serial);
}

TEST(ControlCosts, SigmaForm) {
  MppiConfig c = pendulum_config(2, 2, 0.5);
  c.lambda = 0.2;
  Matrix nominal(1, 2);
  nominal << 1.0, -1.0;
  Matrix applied(1, 4);
  applied << 1.5, -1.0, 0.0, 2.0;
  // gamma = lambda; sum_s u_s sigma^-1 (v_s - u_s)
  const Vector S = control_costs(c, nominal, applied);
  EXPECT_NEAR(S(0), 0.2 * (1.0 * 2.0 * 0.5), 1e-15);
  EXPECT_NEAR(S(1), 0.2 * (1.0 * 2.0 * -1.0 + -1.0 * 2.0 * 3.0), 1e-15);
}

TEST(ControlCosts, AdaptiveLambdaDefaultsGammaToZero) {
  MppiConfig c = pendulum_config(2, 2, 0.5);
  c.adaptive_lambda = true;
  EXPECT_EQ(c.effective_gamma(), 0.0);
  c.gamma = 0.3;
  EXPECT_EQ(c.effective_gamma(), 0.3);
}

TEST(Config, Validation) {
  MppiConfig c = pendulum_config(5, 10, 1.0);
  EXPECT_NO_THROW(c.validate());
  c.sigma = Matrix::Constant(1, 1, -1.0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = pendulum_config(5, 10, 1.0);
  c.smoothing = true;
  c.smoothing_window = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = pendulum_config(0, 10, 1.0);
  EXPECT_THROW(c.validate(), ConfigError);
}

// -- backends ---------------------------------------------------------------

TEST(TrueBackend, EquilibriumCostsNothing) {
  auto plant = std::make_shared<Pendulum>();
  const TrueBackend backend(plant);
  const Matrix applied = Matrix::Zero(1, 3 * 20);
  const Vector S = backend.state_costs(vec({0.0, 0.0}), applied, 20, 3, 1.0, nullptr);
  EXPECT_LE(S.cwiseAbs().maxCoeff(), 1e-25);
}

TEST(TrueBackend, CostIsSumAlongTrajectory) {
  auto plant = std::make_shared<Pendulum>();
  const TrueBackend backend(plant);
  const Matrix applied = random_matrix(1, 2 * 6, 4).cwiseMax(-2.0).cwiseMin(2.0);
  const Vector x0 = vec({2.5, -1.0});
  const Vector S = backend.state_costs(x0, applied, 6, 2, 3.0, nullptr);
  for (int n = 0; n < 2; ++n) {
    Vector x = x0;
    double expected = 0.0;
    for (int s = 0; s < 6; ++s) {
      x = plant->step(x, applied.col(n * 6 + s));
      expected += plant->stage_cost(x) * (s == 5 ? 1.0 + 3.0 : 1.0);
    }
    EXPECT_NEAR(S(n), expected, 1e-12 * expected) << n;
  }
}

TEST(TrueBackend, IdenticalNoiseIdenticalCost) {
  auto plant = std::make_shared<Pendulum>();
  const TrueBackend backend(plant);
  const Matrix one = random_matrix(1, 10, 5).cwiseMax(-2.0).cwiseMin(2.0);
  Matrix applied(1, 20);
  applied << one, one;
  const Vector S = backend.state_costs(vec({1.0, 0.5}), applied, 10, 2, 1.0, nullptr);
  EXPECT_EQ(S(0), S(1));
}

std::shared_ptr<KoopmanModel> linear_oracle_model(const LinearParams& p) {
  auto m = std::make_shared<KoopmanModel>();
  m->net = lift_init(LiftingArchitecture::identity(static_cast<int>(p.A.rows())), 0);
  m->A = p.A;
  m->B = p.B;
  m->C = Matrix::Identity(p.A.rows(), p.A.rows());
  return m;
}

TEST(KoopmanBackend, SingleStepClosedForm) {
  const LinearParams p = random_stable_linear(3, 2, 6);
  auto plant = std::make_shared<LinearPlant>(p);
  auto model = linear_oracle_model(p);
  const KoopmanBackend backend(plant, model);
  const Matrix applied = random_matrix(2, 4, 7).cwiseMax(-1.0).cwiseMin(1.0);
  const Vector x = vec({0.2, -0.4, 0.1});
  // T = 1 without a terminal term: S is the single predicted stage cost.
  const Vector S = backend.state_costs(x, applied, 1, 4, 0.0, nullptr);
  for (int n = 0; n < 4; ++n) {
    const Vector next = model->C * (model->A * model->net.forward(x) + model->B * applied.col(n));
    EXPECT_NEAR(S(n), next.squaredNorm(), 1e-14);
  }
}

TEST(KoopmanBackend, MatchesReliftAndTrueOnLinearOracle) {
  const LinearParams p = random_stable_linear(4, 2, 8);
  auto plant = std::make_shared<LinearPlant>(p);
  auto model = linear_oracle_model(p);
  const KoopmanBackend dk(plant, model);
  const ReliftBackend relift(plant, model);
  const TrueBackend truth(plant);
  const int T = 15;
  const int N = 130;
  const Matrix applied = random_matrix(2, N * T, 9).cwiseMax(-1.0).cwiseMin(1.0);
  const Vector x = vec({0.5, -0.2, 0.3, 0.9});
  const Vector a = dk.state_costs(x, applied, T, N, 2.0, nullptr);
  const Vector b = relift.state_costs(x, applied, T, N, 2.0, nullptr);
  const Vector c = truth.state_costs(x, applied, T, N, 2.0, nullptr);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((a - c).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(KoopmanBackend, ZeroNoiseGivesIdenticalCosts) {
  const LinearParams p = random_stable_linear(2, 1, 10);
  auto plant = std::make_shared<LinearPlant>(p);
  const KoopmanBackend dk(plant, linear_oracle_model(p));
  const Matrix applied = Matrix::Constant(1, 8 * 5, 0.3);
  const Vector S = dk.state_costs(vec({0.4, 0.1}), applied, 5, 8, 1.0, nullptr);
  EXPECT_EQ(S, Vector::Constant(8, S(0)));
}

TEST(KoopmanBackend, OneNetworkEvaluationPerStep) {
  auto plant = std::make_shared<Pendulum>();
  LiftingArchitecture arch = LiftingArchitecture::mlp(2, {16, 16}, 2);
  arch.append_state = true;
  auto model = std::make_shared<KoopmanModel>();
  model->net = lift_init(arch, 1);
  model->A = Matrix::Identity(4, 4);
  model->B = Matrix::Zero(4, 1);
  model->C = Matrix::Zero(2, 4);
  model->C.leftCols(2).setIdentity();
  for (int T : {1, 20}) {
    for (int N : {10, 700}) {
      auto dk = std::make_shared<KoopmanBackend>(plant, model);
      auto relift = std::make_shared<ReliftBackend>(plant, model);
      MppiController a(pendulum_config(T, N, 1.0), dk);
      MppiController b(pendulum_config(T, N, 1.0), relift);
      for (int k = 0; k < 3; ++k) {
        a.step(vec({3.0, 0.0}));
        b.step(vec({3.0, 0.0}));
      }
      EXPECT_EQ(dk->network_evaluations(), 3u);
      EXPECT_EQ(relift->network_evaluations(), 3u * static_cast<std::uint64_t>(N * T));
    }
  }
}

// -- controller -------------------------------------------------------------

TEST(Controller, ZeroSigmaLeavesNominal) {
  auto plant = std::make_shared<Pendulum>();
  MppiController ctl(pendulum_config(4, 10, 0.0), std::make_shared<TrueBackend>(plant));
  Matrix nominal(1, 4);
  nominal << 0.5, -0.25, 1.0, 2.0;
  ctl.reset(nominal);
  const StepResult r = ctl.step(vec({1.0, 0.0}));
  EXPECT_EQ(r.u0(0), 0.5);
  EXPECT_EQ(ctl.nominal(), shift_warm_start(nominal));
}

TEST(Controller, NominalWithinBoundsAfterEveryStep) {
  auto plant = std::make_shared<Pendulum>();
  MppiConfig c = pendulum_config(10, 64, 4.0);
  c.smoothing = true;
  MppiController ctl(c, std::make_shared<TrueBackend>(plant));
  Vector x = vec({std::numbers::pi, 0.1});
  for (int k = 0; k < 20; ++k) {
    const StepResult r = ctl.step(x);
    ASSERT_TRUE(c.input_bounds.contains(r.u0));
    for (Eigen::Index s = 0; s < ctl.nominal().cols(); ++s) {
      ASSERT_TRUE(c.input_bounds.contains(ctl.nominal().col(s)));
    }
    x = plant->step(x, r.u0);
  }
}

TEST(Controller, DiagnosticsAreConsistent) {
  auto plant = std::make_shared<Pendulum>();
  MppiConfig c = pendulum_config(10, 50, 1.0);
  c.adaptive_lambda = true;
  MppiController ctl(c, std::make_shared<TrueBackend>(plant));
  const StepResult r = ctl.step(vec({2.0, 0.0}));
  EXPECT_EQ(r.diagnostics.min_cost, r.costs.minCoeff());
  EXPECT_NEAR(r.diagnostics.mean_cost, r.costs.mean(), 1e-9 * r.costs.mean());
  EXPECT_NEAR(r.diagnostics.lambda, 0.5 * finite_cost_std(r.costs), 1e-15);
  EXPECT_GE(r.diagnostics.effective_sample_size, 1.0);
  EXPECT_LE(r.diagnostics.effective_sample_size, 50.0);
  EXPECT_EQ(ctl.step_index(), 1u);
}

TEST(Controller, DeterministicAcrossThreadCounts) {
  auto plant = std::make_shared<Pendulum>();
  const MppiConfig c = pendulum_config(20, 500, 1.0);
  std::vector<Vector> reference;
  for (std::size_t threads : {1u, 2u, 8u}) {
    ThreadPool pool(threads);
    MppiController ctl(c, std::make_shared<TrueBackend>(plant), &pool);
    Vector x = vec({std::numbers::pi, 0.1});
    std::vector<Vector> trace;
    for (int k = 0; k < 5; ++k) {
      const StepResult r = ctl.step(x);
      trace.push_back(r.costs);
      trace.push_back(r.u0);
      x = plant->step(x, r.u0);
    }
    if (reference.empty()) {
      reference = trace;
    } else {
      ASSERT_EQ(trace.size(), reference.size());
      for (std::size_t i = 0; i < trace.size(); ++i) EXPECT_EQ(trace[i], reference[i]) << threads;
    }
  }
}

TEST(Controller, AllInfiniteCostsRaiseAndKeepNominal) {
  struct Diverging final : RolloutBackend {
    std::shared_ptr<Pendulum> p = std::make_shared<Pendulum>();
    std::string name() const override { return "diverging"; }
    const Plant& plant() const override { return *p; }
    Vector state_costs(const Eigen::Ref<const Vector>&, const Matrix&, int, int n, double,
                       ThreadPool*) const override {
      return Vector::Constant(n, kInf);
    }
  };
  MppiController ctl(pendulum_config(4, 10, 1.0), std::make_shared<Diverging>());
  const ControlSequence before = ctl.nominal();
  EXPECT_THROW(ctl.step(vec({0.0, 0.0})), ControllerError);
  EXPECT_EQ(ctl.nominal(), before);
}

}  // namespace
}  // namespace mppidk

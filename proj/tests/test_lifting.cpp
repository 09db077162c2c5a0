#include <cmath>

#include <gtest/gtest.h>

#include "mppidk/errors.hpp"
#include "mppidk/lifting.hpp"
#include "test_util.hpp"

namespace mppidk {
namespace {

using testing::random_matrix;

LiftingNetwork unit_chain() {
  const LiftingArchitecture arch = LiftingArchitecture::mlp(1, {1, 1}, 1);
  LiftingNetwork net = lift_init(arch, 0);
  Vector theta = Vector::Zero(net.num_parameters());
  // weight, bias per layer
  theta(0) = theta(2) = theta(4) = 1.0;
  net.set_parameters(theta);
  return net;
}

TEST(LiftInit, DeterministicInSeed) {
  const LiftingArchitecture arch = LiftingArchitecture::mlp(2, {16, 16}, 4);
  EXPECT_EQ(lift_init(arch, 5), lift_init(arch, 5));
  EXPECT_NE(lift_init(arch, 5).parameters(), lift_init(arch, 6).parameters());
}

TEST(LiftInit, GlorotBoundsAndZeroBias) {
  const LiftingArchitecture arch = LiftingArchitecture::mlp(3, {32, 16}, 5);
  const LiftingNetwork net = lift_init(arch, 11);
  ASSERT_EQ(net.layers().size(), 3u);
  for (const DenseLayer& layer : net.layers()) {
    const double s = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
    EXPECT_LE(layer.weight.cwiseAbs().maxCoeff(), s);
    EXPECT_EQ(layer.bias, Vector::Zero(layer.bias.size()));
  }
  EXPECT_EQ(net.layers()[0].weight.cols(), 3);
  EXPECT_EQ(net.layers()[2].weight.rows(), 5);
}

TEST(LiftingArchitecture, RejectsLiftBelowStateDim) {
  EXPECT_THROW(LiftingArchitecture::mlp(4, {8, 8}, 2).validate(), InvalidInput);
  EXPECT_THROW(LiftingArchitecture::mlp(2, {}, 4).validate(), InvalidInput);
}

TEST(LiftingArchitecture, AppendedRows) {
  LiftingArchitecture arch = LiftingArchitecture::mlp(2, {8}, 3);
  arch.append_state = true;
  arch.append_constant = true;
  EXPECT_EQ(arch.lift_dim(), 6);
  const LiftingNetwork net = lift_init(arch, 1);
  const Vector x = Eigen::Vector2d(0.3, -0.7);
  const Vector g = net.forward(x);
  EXPECT_EQ(g.head(2), x);
  EXPECT_EQ(g(5), 1.0);
}

TEST(LiftForward, ZeroParametersGiveZero) {
  LiftingNetwork net = lift_init(LiftingArchitecture::mlp(2, {4, 4}, 3), 0);
  net.set_parameters(Vector::Zero(net.num_parameters()));
  EXPECT_EQ(net.forward(Eigen::Vector2d(1.0, -2.0)), Vector::Zero(3));
}

TEST(LiftForward, HandEvaluatedChain) {
  const LiftingNetwork net = unit_chain();
  EXPECT_NEAR(net.forward(Vector::Constant(1, 2.0))(0), 0.96403, 5e-6);
  EXPECT_DOUBLE_EQ(net.forward(Vector::Constant(1, 2.0))(0), std::tanh(2.0));
}

TEST(LiftForward, BatchMatchesSingle) {
  const LiftingNetwork net = lift_init(LiftingArchitecture::mlp(3, {8, 8}, 4), 2);
  const Vector x = random_matrix(3, 1, 9);
  const Matrix xs = x.replicate(1, 5);
  const Matrix g = lift_forward(net, xs);
  for (int j = 0; j < 5; ++j) EXPECT_EQ(g.col(j), net.forward(x));
}

TEST(LiftForward, RejectsWrongDimension) {
  const LiftingNetwork net = lift_init(LiftingArchitecture::mlp(3, {8}, 4), 2);
  EXPECT_THROW(net.forward(Vector::Zero(2)), InvalidInput);
}

TEST(LiftBackward, HandChainRule) {
  const LiftingNetwork net = unit_chain();
  const Vector grad = lift_backward(net, Matrix::Constant(1, 1, 2.0), Matrix::Ones(1, 1));
  const double dtanh = 1.0 - std::tanh(2.0) * std::tanh(2.0);
  EXPECT_NEAR(grad(4), 0.14130, 5e-6);
  EXPECT_DOUBLE_EQ(grad(4), 2.0 * dtanh);
  EXPECT_DOUBLE_EQ(grad(5), dtanh);
}

TEST(LiftBackward, ZeroUpstreamGivesZero) {
  const LiftingNetwork net = lift_init(LiftingArchitecture::mlp(2, {8, 8}, 4), 3);
  const Vector grad = net.backward(random_matrix(2, 6, 1), Matrix::Zero(4, 6));
  EXPECT_EQ(grad, Vector::Zero(net.num_parameters()));
}

TEST(LiftBackward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    LiftingArchitecture arch = LiftingArchitecture::mlp(3, {7, 5}, 4);
    arch.append_state = seed % 2 == 1;
    const LiftingNetwork net = lift_init(arch, seed);
    const Matrix xs = random_matrix(3, 4, 100 + seed);
    const Matrix up = random_matrix(arch.lift_dim(), 4, 200 + seed);
    const Vector grad = net.backward(xs, up);

    const Vector theta = net.parameters();
    LiftingNetwork probe = net;
    const double h = 1e-6;
    Vector fd(theta.size());
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Vector t = theta;
      t(k) += h;
      probe.set_parameters(t);
      const double plus = (up.array() * probe.forward_batch(xs).array()).sum();
      t(k) -= 2.0 * h;
      probe.set_parameters(t);
      const double minus = (up.array() * probe.forward_batch(xs).array()).sum();
      fd(k) = (plus - minus) / (2.0 * h);
    }
    EXPECT_LE((grad - fd).norm(), 1e-6 * std::max(1.0, fd.norm())) << "seed " << seed;
  }
}

TEST(Parameters, RoundTrip) {
  LiftingNetwork net = lift_init(LiftingArchitecture::mlp(2, {6, 6}, 3), 4);
  const Vector theta = random_matrix(net.num_parameters(), 1, 5);
  net.set_parameters(theta);
  EXPECT_EQ(net.parameters(), theta);
  EXPECT_THROW(net.set_parameters(Vector::Zero(3)), InvalidInput);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  AdamState state = AdamState::zeros(3);
  state.first_moment = Eigen::Vector3d(0.1, -0.2, 0.3);
  state.second_moment = Eigen::Vector3d(0.01, 0.02, 0.03);
  Vector theta = Eigen::Vector3d(1.0, 2.0, 3.0);
  const Vector before = theta;
  adam_step(state, theta, Vector::Zero(3));
  EXPECT_EQ(state.first_moment, Vector(0.9 * Eigen::Vector3d(0.1, -0.2, 0.3)));
  EXPECT_EQ(state.second_moment, Vector(0.999 * Eigen::Vector3d(0.01, 0.02, 0.03)));
  EXPECT_EQ(state.step, 1u);
  // The decayed first moment still moves theta; with zero moments it cannot.
  AdamState fresh = AdamState::zeros(3);
  Vector t2 = before;
  adam_step(fresh, t2, Vector::Zero(3));
  EXPECT_EQ(t2, before);
}

TEST(Adam, FirstStepHasMagnitudeAlpha) {
  AdamState state = AdamState::zeros(4);
  Vector theta = Vector::Zero(4);
  const Vector grad = Eigen::Vector4d(3.0, -0.5, 1e-2, 0.0);
  adam_step(state, theta, grad);
  const double a = state.config.learning_rate;
  EXPECT_NEAR(theta(0), -a, 1e-9);
  EXPECT_NEAR(theta(1), a, 1e-9);
  EXPECT_NEAR(theta(2), -a, 1e-8);
  EXPECT_EQ(theta(3), 0.0);
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
  AdamState s1 = AdamState::zeros(2);
  AdamState s2 = AdamState::zeros(2);
  Vector t1 = Eigen::Vector2d(0.5, 0.5);
  Vector t2 = t1;
  adam_step(s1, t1, Eigen::Vector2d(0.3, -0.1));
  adam_step(s2, t2, Eigen::Vector2d(0.3, -0.1));
  EXPECT_EQ(t1, t2);

  const Vector keep = t1;
  const std::uint64_t step = s1.step;
  EXPECT_THROW(adam_step(s1, t1, Eigen::Vector2d(NAN, 0.0)), TrainingError);
  EXPECT_EQ(t1, keep);
  EXPECT_EQ(s1.step, step);
}

TEST(Lipschitz, BoundHoldsOnRandomPairs) {
  const LiftingNetwork net = lift_init(LiftingArchitecture::mlp(3, {16, 16}, 4), 8);
  const double L = lipschitz_upper_bound(net);
  ASSERT_GT(L, 0.0);
  for (std::uint64_t k = 0; k < 200; ++k) {
    const Vector a = random_matrix(3, 1, 1000 + k);
    const Vector b = random_matrix(3, 1, 5000 + k);
    EXPECT_LE((net.forward(a) - net.forward(b)).norm(), L * (a - b).norm() + 1e-12);
  }
}

TEST(Lifting, OutputBoundedByTanh) {
  const LiftingNetwork net = lift_init(LiftingArchitecture::mlp(2, {16, 16}, 6), 9);
  const Matrix g = net.forward_batch(100.0 * random_matrix(2, 50, 3));
  EXPECT_LE(g.cwiseAbs().maxCoeff(), 1.0);
}

}  // namespace
}  // namespace mppidk

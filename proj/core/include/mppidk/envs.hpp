#pragma once

#include <cstdint>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "mppidk/dko.hpp"
#include "mppidk/numerics.hpp"

namespace mppidk {

// Wraps an angle to [-pi, pi).
double wrap_angle(double a);

// Discrete-time plant x+ = f(x, v) with a stage cost, plus the hooks the
// Koopman controller needs to run rollouts in the plant's learned coordinates.
//
// Three state spaces are involved:
//   full state    what step() advances (e.g. the quadruped's 9-dim state);
//   learned state what the DKO model is trained on (learned_state(x));
//   rollout state what surrogate rollouts carry and score. It contains the
//                 learned state and whatever the plant integrates analytically
//                 on top of it (the boat's pose).
class Plant {
 public:
  virtual ~Plant() = default;

  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual const Box& input_bounds() const = 0;
  // Declared operating box for full states; data collection stays inside it.
  virtual const Box& state_bounds() const = 0;

  // Clamps u to the input bounds, then advances one step. Throws
  // SimulationError if the result is not finite.
  virtual Vector step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const = 0;
  // The terminal cost is this stage cost scaled by the controller's terminal
  // weight.
  virtual double stage_cost(const Eigen::Ref<const Vector>& x) const = 0;

  // Episode start for data collection; draws uniforms from (stream, counter++).
  virtual Vector sample_reset(std::uint64_t stream, std::uint64_t& counter) const = 0;

  // Per-state goal test used by the episode metrics.
  virtual bool at_goal(const Eigen::Ref<const Vector>& x) const = 0;
  // Error reported for the final state of an episode.
  virtual double final_error(const Eigen::Ref<const Vector>& x) const { return stage_cost(x); }
  // Euclidean distance to the goal in the plant's position coordinates.
  virtual double goal_distance(const Eigen::Ref<const Vector>& x) const = 0;

  // -- learned coordinates ---------------------------------------------------
  virtual int learned_dim() const { return state_dim(); }
  virtual Box learned_bounds() const { return state_bounds(); }
  virtual Vector learned_state(const Eigen::Ref<const Vector>& x) const { return x; }
  // Training target for the transition x -> x_next. Plants with wrapped
  // coordinates return a successor continuous with learned_state(x).
  virtual Vector learned_successor(const Eigen::Ref<const Vector>& x,
                                   const Eigen::Ref<const Vector>& x_next) const {
    (void)x;
    return learned_state(x_next);
  }

  // -- surrogate rollouts ----------------------------------------------------
  virtual int rollout_dim() const { return state_dim(); }
  virtual Vector rollout_state(const Eigen::Ref<const Vector>& x) const { return x; }
  // Learned coordinates of each rollout-state column.
  virtual Matrix rollout_learned(const Eigen::Ref<const Matrix>& Y) const { return Y; }
  // Given predicted next learned states Z (one column per rollout), advance
  // the rollout states Y in place.
  virtual void rollout_advance(Matrix& Y, const Eigen::Ref<const Matrix>& Z) const { Y = Z; }
  // costs(j) += weight * stage cost of rollout state Y.col(j).
  virtual void rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                                Eigen::Ref<Vector> costs) const;
  virtual double rollout_cost(const Eigen::Ref<const Vector>& y) const { return stage_cost(y); }
};

// ---------------------------------------------------------------------------

struct PendulumParams {
  double gravity = 10.0;
  double mass = 1.0;
  double length = 1.0;
  double dt = 0.05;
  double max_speed = 8.0;
  double max_torque = 2.0;
  bool clamp_speed = true;
  bool wrap_angle = true;
  // Reset box for data collection: theta in [-pi, pi], theta_dot in +-reset_speed.
  double reset_speed = 1.0;
  // Goal region used by at_goal().
  double goal_angle_tol = 0.2;
  double goal_speed_tol = 0.5;
};

class Pendulum final : public Plant {
 public:
  explicit Pendulum(PendulumParams params = {});

  std::string name() const override { return "pendulum"; }
  int state_dim() const override { return 2; }
  int input_dim() const override { return 1; }
  const Box& input_bounds() const override { return input_bounds_; }
  const Box& state_bounds() const override { return state_bounds_; }
  const PendulumParams& params() const { return params_; }

  Vector step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const override;
  // theta^2 + 0.1 theta_dot^2
  double stage_cost(const Eigen::Ref<const Vector>& x) const override;
  Vector sample_reset(std::uint64_t stream, std::uint64_t& counter) const override;
  bool at_goal(const Eigen::Ref<const Vector>& x) const override;
  double goal_distance(const Eigen::Ref<const Vector>& x) const override;

  // theta + wrap(theta_next - theta): one step never spans more than pi, so
  // the successor stays continuous across the +-pi seam. The learned box is
  // widened by one step of maximum speed to hold it.
  Box learned_bounds() const override;
  Vector learned_successor(const Eigen::Ref<const Vector>& x,
                           const Eigen::Ref<const Vector>& x_next) const override;
  // Predicted angles are wrapped before they are scored.
  void rollout_advance(Matrix& Y, const Eigen::Ref<const Matrix>& Z) const override;
  void rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                        Eigen::Ref<Vector> costs) const override;

 private:
  PendulumParams params_;
  Box input_bounds_;
  Box state_bounds_;
};

// ---------------------------------------------------------------------------

inline constexpr int kBoatFeatureCount = 22;

struct BoatParams {
  Matrix M;  // 3 x 22; empty selects default_boat_matrix()
  double dt = 0.1;
  Vector goal;  // 6; empty selects [0, 0, pi/2, 0, 0, 0]
  // Full-state operating box (x, y, phi, v_x, v_y, phi_dot).
  Vector state_lower;
  Vector state_upper;
  // Reset distribution for data collection.
  double reset_position = 1.0;      // x, y uniform in +-reset_position
  Vector reset_velocity;            // |s_i| <= reset_velocity(i)
  double goal_position_tol = 1.0;   // at_goal: position error bound (m)
};

// Surrogate hydrodynamics: surge force u_left + u_right, yaw moment
// u_right - u_left, linear damping diag(0.5, 0.8, 0.6) and quadratic drag 0.1
// on v_x|v_x|, v_y|v_y|, phi_dot|phi_dot|.
Matrix default_boat_matrix();

// psi(s, u) in the documented order; f2 = f4 = 0 (fixed rudder).
Eigen::Matrix<double, kBoatFeatureCount, 1> boat_features(const Eigen::Ref<const Vector>& s,
                                                         const Eigen::Ref<const Vector>& u);

class Boat final : public Plant {
 public:
  explicit Boat(BoatParams params = {});

  std::string name() const override { return "boat"; }
  int state_dim() const override { return 6; }
  int input_dim() const override { return 2; }
  const Box& input_bounds() const override { return input_bounds_; }
  const Box& state_bounds() const override { return state_bounds_; }
  const BoatParams& params() const { return params_; }

  // Velocities first (Euler on s_dot = M psi), then the pose using the updated
  // velocities rotated by the current yaw.
  Vector step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const override;
  // ||x - x_goal||^2
  double stage_cost(const Eigen::Ref<const Vector>& x) const override;
  Vector sample_reset(std::uint64_t stream, std::uint64_t& counter) const override;
  bool at_goal(const Eigen::Ref<const Vector>& x) const override;
  double goal_distance(const Eigen::Ref<const Vector>& x) const override;

  // The DKO model learns the velocity map s -> s+; the pose is integrated
  // analytically in rollouts.
  int learned_dim() const override { return 3; }
  Box learned_bounds() const override;
  Vector learned_state(const Eigen::Ref<const Vector>& x) const override { return x.tail<3>(); }
  Matrix rollout_learned(const Eigen::Ref<const Matrix>& Y) const override { return Y.bottomRows(3); }
  void rollout_advance(Matrix& Y, const Eigen::Ref<const Matrix>& Z) const override;
  void rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                        Eigen::Ref<Vector> costs) const override;

 private:
  BoatParams params_;
  Box input_bounds_;
  Box state_bounds_;
};

// ---------------------------------------------------------------------------

struct QuadrupedParams {
  double mass = 12.0;
  double inertia_zz = 0.9;
  double com_height = 0.3;
  double dt = 0.05;
  Vector goal;  // (x, y, theta); empty selects (1.5, 0, 0)
  double success_threshold = 0.05;
  // Full-state operating box (9 entries, momenta included).
  Vector state_lower;
  Vector state_upper;
  // Reset distribution for data collection.
  Vector reset_lower;  // (x, y, v_x, v_y, theta_dot)
  Vector reset_upper;
  // Yaw is uniform within +-reset_yaw of the goal heading.
  double reset_yaw = 1.5707963267948966;
};

// Task state s = [dx, dy, dtheta, cos theta, sin theta, v_x, v_y, theta_dot].
Vector quadruped_task_state(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& goal);
// 6 dx^2 + 20 dy^2 + 4.5 dtheta^2
double quadruped_cost(const Eigen::Ref<const Vector>& s);
// dx^2 + dy^2 + dtheta^2 <= threshold
double quadruped_goal_error(const Eigen::Ref<const Vector>& s);
bool quadruped_success(const Eigen::Ref<const Vector>& s, double threshold = 0.05);

class Quadruped final : public Plant {
 public:
  explicit Quadruped(QuadrupedParams params = {});

  std::string name() const override { return "quadruped"; }
  int state_dim() const override { return 9; }
  int input_dim() const override { return 3; }
  const Box& input_bounds() const override { return input_bounds_; }
  const Box& state_bounds() const override { return state_bounds_; }
  const QuadrupedParams& params() const { return params_; }

  // Full state from a pose at rest.
  Vector state_from_pose(double x, double y, double theta) const;

  Vector step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const override;
  double stage_cost(const Eigen::Ref<const Vector>& x) const override;
  Vector sample_reset(std::uint64_t stream, std::uint64_t& counter) const override;
  bool at_goal(const Eigen::Ref<const Vector>& x) const override;
  double final_error(const Eigen::Ref<const Vector>& x) const override;
  double goal_distance(const Eigen::Ref<const Vector>& x) const override;

  int learned_dim() const override { return 8; }
  Box learned_bounds() const override;
  Vector learned_state(const Eigen::Ref<const Vector>& x) const override;
  // Heading error continues across the wrap, as for the pendulum angle.
  Vector learned_successor(const Eigen::Ref<const Vector>& x,
                           const Eigen::Ref<const Vector>& x_next) const override;
  int rollout_dim() const override { return 8; }
  void rollout_advance(Matrix& Y, const Eigen::Ref<const Matrix>& Z) const override;
  Vector rollout_state(const Eigen::Ref<const Vector>& x) const override { return learned_state(x); }
  void rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                        Eigen::Ref<Vector> costs) const override;
  double rollout_cost(const Eigen::Ref<const Vector>& y) const override { return quadruped_cost(y); }

 private:
  QuadrupedParams params_;
  Box input_bounds_;
  Box state_bounds_;
};

// ---------------------------------------------------------------------------

// x+ = A x + B clamp(u); stage cost ||x||^2. Test fixture for the learning code.
struct LinearParams {
  Matrix A;
  Matrix B;
  double state_bound = 10.0;
  double input_bound = 1.0;
  double reset_bound = 1.0;
};

class LinearPlant final : public Plant {
 public:
  explicit LinearPlant(LinearParams params);

  std::string name() const override { return "linear"; }
  int state_dim() const override { return static_cast<int>(params_.A.rows()); }
  int input_dim() const override { return static_cast<int>(params_.B.cols()); }
  const Box& input_bounds() const override { return input_bounds_; }
  const Box& state_bounds() const override { return state_bounds_; }
  const LinearParams& params() const { return params_; }

  Vector step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const override;
  double stage_cost(const Eigen::Ref<const Vector>& x) const override { return x.squaredNorm(); }
  Vector sample_reset(std::uint64_t stream, std::uint64_t& counter) const override;
  bool at_goal(const Eigen::Ref<const Vector>& x) const override { return x.norm() <= 1e-2; }
  double goal_distance(const Eigen::Ref<const Vector>& x) const override { return x.norm(); }

 private:
  LinearParams params_;
  Box input_bounds_;
  Box state_bounds_;
};

// A random Schur-stable (spectral radius <= radius) matrix pair for tests.
LinearParams random_stable_linear(int n, int m, std::uint64_t seed, double radius = 0.9);

// ---------------------------------------------------------------------------

struct CollectConfig {
  Eigen::Index num_samples = 1000;
  int episode_length = 50;
  std::uint64_t seed = 0;
};

struct CollectResult {
  TransitionDataset dataset;
  // Episodes cut short because the plant diverged or left its operating box.
  std::size_t discarded_episodes = 0;
};

// Uniform-random excitation: episodes start from sample_reset() and apply
// inputs uniform over the input box; tuples are recorded in learned
// coordinates with the applied input.
CollectResult collect_dataset(const Plant& plant, const CollectConfig& cfg);

}  // namespace mppidk

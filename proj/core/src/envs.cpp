#include "mppidk/envs.hpp"

#include <cmath>
#include <string>

#include "mppidk/errors.hpp"

namespace mppidk {

namespace {

constexpr double kPi = std::numbers::pi;

double draw(std::uint64_t stream, std::uint64_t& counter, double lo, double hi) {
  return lo + (hi - lo) * numerics::counter_uniform(stream, counter++);
}

Box make_box(Vector lower, Vector upper, const char* what) {
  Box b{std::move(lower), std::move(upper)};
  b.validate(what);
  return b;
}

Box symmetric_box(const Vector& half_width, const char* what) {
  return make_box(-half_width, half_width, what);
}

void require_finite_state(const Vector& x, const char* plant) {
  if (!x.allFinite()) throw SimulationError(std::string(plant) + ": state diverged (non-finite)");
}

void require_dims(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u,
                  int n, int m, const char* plant) {
  if (x.size() != n || u.size() != m) {
    throw InvalidInput(std::string(plant) + ": state or input has the wrong dimension");
  }
}

}  // namespace

double wrap_angle(double a) {
  const double two_pi = 2.0 * kPi;
  double w = a - two_pi * std::floor((a + kPi) / two_pi);
  // Rounding can land exactly on +pi; fold it to the half-open interval.
  if (w >= kPi) w -= two_pi;
  if (w < -kPi) w += two_pi;
  return w;
}

void Plant::rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                             Eigen::Ref<Vector> costs) const {
  for (Eigen::Index j = 0; j < Y.cols(); ++j) costs(j) += weight * rollout_cost(Y.col(j));
}

// ---------------------------------------------------------------------------
// Pendulum

Pendulum::Pendulum(PendulumParams params) : params_(params) {
  if (!(params_.dt > 0.0) || !(params_.mass > 0.0) || !(params_.length > 0.0)) {
    throw InvalidInput("pendulum: dt, mass and length must be positive");
  }
  input_bounds_ = make_box(Vector::Constant(1, -params_.max_torque),
                           Vector::Constant(1, params_.max_torque), "pendulum input bounds");
  state_bounds_ = make_box(Eigen::Vector2d(-kPi, -params_.max_speed),
                           Eigen::Vector2d(kPi, params_.max_speed), "pendulum state bounds");
}

Vector Pendulum::step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
  require_dims(x, u, 2, 1, "pendulum");
  const PendulumParams& p = params_;
  const double torque = std::clamp(u(0), -p.max_torque, p.max_torque);
  double speed = x(1) + (-3.0 * p.gravity * std::sin(x(0) + kPi) / (2.0 * p.length) +
                         3.0 * torque / (p.mass * p.length * p.length)) *
                            p.dt;
  if (p.clamp_speed) speed = std::clamp(speed, -p.max_speed, p.max_speed);
  double angle = x(0) + speed * p.dt;
  if (p.wrap_angle) angle = wrap_angle(angle);
  Vector next(2);
  next << angle, speed;
  require_finite_state(next, "pendulum");
  return next;
}

double Pendulum::stage_cost(const Eigen::Ref<const Vector>& x) const {
  return x(0) * x(0) + 0.1 * x(1) * x(1);
}

Vector Pendulum::sample_reset(std::uint64_t stream, std::uint64_t& counter) const {
  Vector x(2);
  x(0) = draw(stream, counter, -kPi, kPi);
  x(1) = draw(stream, counter, -params_.reset_speed, params_.reset_speed);
  return x;
}

bool Pendulum::at_goal(const Eigen::Ref<const Vector>& x) const {
  return std::abs(x(0)) <= params_.goal_angle_tol && std::abs(x(1)) <= params_.goal_speed_tol;
}

double Pendulum::goal_distance(const Eigen::Ref<const Vector>& x) const {
  return x.norm();
}

Box Pendulum::learned_bounds() const {
  Box b = state_bounds_;
  const double reach = params_.max_speed * params_.dt;
  b.lower(0) -= reach;
  b.upper(0) += reach;
  return b;
}

Vector Pendulum::learned_successor(const Eigen::Ref<const Vector>& x,
                                   const Eigen::Ref<const Vector>& x_next) const {
  Vector s = x_next;
  if (params_.wrap_angle) s(0) = x(0) + wrap_angle(x_next(0) - x(0));
  return s;
}

void Pendulum::rollout_advance(Matrix& Y, const Eigen::Ref<const Matrix>& Z) const {
  Y = Z;
  if (params_.wrap_angle) {
    for (Eigen::Index j = 0; j < Y.cols(); ++j) Y(0, j) = wrap_angle(Y(0, j));
  }
}

void Pendulum::rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                                Eigen::Ref<Vector> costs) const {
  costs.array() += weight * (Y.row(0).array().square() + 0.1 * Y.row(1).array().square()).transpose();
}

// ---------------------------------------------------------------------------
// Boat

Matrix default_boat_matrix() {
  Matrix M = Matrix::Zero(3, kBoatFeatureCount);
  // surge
  M(0, 0) = -0.5;
  M(0, 9) = -0.1;
  M(0, 18) = 1.0;
  M(0, 20) = 1.0;
  // sway
  M(1, 1) = -0.8;
  M(1, 13) = -0.1;
  // yaw
  M(2, 2) = -0.6;
  M(2, 17) = -0.1;
  M(2, 18) = -1.0;
  M(2, 20) = 1.0;
  return M;
}

Eigen::Matrix<double, kBoatFeatureCount, 1> boat_features(const Eigen::Ref<const Vector>& s,
                                                         const Eigen::Ref<const Vector>& u) {
  if (s.size() != 3 || u.size() != 2) throw InvalidInput("boat_features: expects s in R^3, u in R^2");
  const double vx = s(0);
  const double vy = s(1);
  const double w = s(2);
  const double ax = std::abs(vx);
  const double ay = std::abs(vy);
  const double aw = std::abs(w);
  Eigen::Matrix<double, kBoatFeatureCount, 1> psi;
  psi << vx, vy, w, vx * vy, vx * w, vy * w, vx * vx, vy * vy, w * w,
      vx * ax, vx * ay, vx * aw,
      vy * ax, vy * ay, vy * aw,
      w * ax, w * ay, w * aw,
      u(0), 0.0, u(1), 0.0;
  return psi;
}

Boat::Boat(BoatParams params) : params_(std::move(params)) {
  if (params_.M.size() == 0) params_.M = default_boat_matrix();
  if (params_.M.rows() != 3 || params_.M.cols() != kBoatFeatureCount) {
    throw InvalidInput("boat: M must be 3 x 22");
  }
  numerics::require_finite(params_.M, "boat M");
  if (!(params_.dt > 0.0)) throw InvalidInput("boat: dt must be positive");
  if (params_.goal.size() == 0) {
    params_.goal = Vector::Zero(6);
    params_.goal(2) = kPi / 2.0;
  }
  if (params_.goal.size() != 6) throw InvalidInput("boat: goal must have 6 entries");
  if (params_.state_lower.size() == 0) {
    params_.state_lower.resize(6);
    params_.state_lower << -100.0, -100.0, -8.0 * kPi, -4.0, -2.0, -4.0;
  }
  if (params_.state_upper.size() == 0) {
    params_.state_upper.resize(6);
    params_.state_upper << 100.0, 100.0, 8.0 * kPi, 4.0, 2.0, 4.0;
  }
  if (params_.reset_velocity.size() == 0) {
    params_.reset_velocity.resize(3);
    params_.reset_velocity << 3.0, 1.0, 2.5;
  }
  if (params_.reset_velocity.size() != 3) throw InvalidInput("boat: reset_velocity must have 3 entries");
  input_bounds_ = make_box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0), "boat input bounds");
  state_bounds_ = make_box(params_.state_lower, params_.state_upper, "boat state bounds");
  if (state_bounds_.dim() != 6) throw InvalidInput("boat: state bounds must have 6 entries");
}

Vector Boat::step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
  require_dims(x, u, 6, 2, "boat");
  const Vector uc = input_bounds_.clamp(u);
  const Vector s = x.tail<3>();
  const Vector s_next = s + params_.M * boat_features(s, uc) * params_.dt;
  const double phi = x(2);
  const double c = std::cos(phi);
  const double sn = std::sin(phi);
  Vector next(6);
  next(0) = x(0) + (c * s_next(0) - sn * s_next(1)) * params_.dt;
  next(1) = x(1) + (sn * s_next(0) + c * s_next(1)) * params_.dt;
  next(2) = x(2) + s_next(2) * params_.dt;
  next.tail<3>() = s_next;
  require_finite_state(next, "boat");
  return next;
}

double Boat::stage_cost(const Eigen::Ref<const Vector>& x) const {
  return (x - params_.goal).squaredNorm();
}

Vector Boat::sample_reset(std::uint64_t stream, std::uint64_t& counter) const {
  Vector x(6);
  const double r = params_.reset_position;
  x(0) = draw(stream, counter, -r, r);
  x(1) = draw(stream, counter, -r, r);
  x(2) = draw(stream, counter, -kPi, kPi);
  for (int i = 0; i < 3; ++i) {
    const double h = params_.reset_velocity(i);
    x(3 + i) = draw(stream, counter, -h, h);
  }
  return x;
}

bool Boat::at_goal(const Eigen::Ref<const Vector>& x) const {
  return goal_distance(x) <= params_.goal_position_tol;
}

double Boat::goal_distance(const Eigen::Ref<const Vector>& x) const {
  return (x.head<2>() - params_.goal.head<2>()).norm();
}

Box Boat::learned_bounds() const {
  return Box{state_bounds_.lower.tail<3>(), state_bounds_.upper.tail<3>()};
}

void Boat::rollout_advance(Matrix& Y, const Eigen::Ref<const Matrix>& Z) const {
  const double dt = params_.dt;
  const auto phi = Y.row(2).array();
  const Eigen::ArrayXd c = phi.cos();
  const Eigen::ArrayXd sn = phi.sin();
  const auto vx = Z.row(0).array();
  const auto vy = Z.row(1).array();
  Y.row(0).array() += ((c.transpose() * vx - sn.transpose() * vy) * dt);
  Y.row(1).array() += ((sn.transpose() * vx + c.transpose() * vy) * dt);
  Y.row(2).array() += Z.row(2).array() * dt;
  Y.bottomRows(3) = Z;
}

void Boat::rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                            Eigen::Ref<Vector> costs) const {
  costs += weight * (Y.colwise() - params_.goal).colwise().squaredNorm().transpose();
}

// ---------------------------------------------------------------------------
// Quadruped

Vector quadruped_task_state(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& goal) {
  if (x.size() != 9 || goal.size() != 3) {
    throw InvalidInput("quadruped_task_state: expects a 9-dim state and a 3-dim goal");
  }
  Vector s(8);
  s << x(0) - goal(0), x(1) - goal(1), wrap_angle(x(2) - goal(2)), std::cos(x(2)), std::sin(x(2)),
      x(3), x(4), x(5);
  return s;
}

double quadruped_cost(const Eigen::Ref<const Vector>& s) {
  return 6.0 * s(0) * s(0) + 20.0 * s(1) * s(1) + 4.5 * s(2) * s(2);
}

double quadruped_goal_error(const Eigen::Ref<const Vector>& s) {
  return s(0) * s(0) + s(1) * s(1) + s(2) * s(2);
}

bool quadruped_success(const Eigen::Ref<const Vector>& s, double threshold) {
  return quadruped_goal_error(s) <= threshold;
}

Quadruped::Quadruped(QuadrupedParams params) : params_(std::move(params)) {
  if (!(params_.mass > 0.0) || !(params_.inertia_zz > 0.0)) {
    throw InvalidInput("quadruped: mass and inertia must be positive");
  }
  if (!(params_.dt > 0.0)) throw InvalidInput("quadruped: dt must be positive");
  if (params_.goal.size() == 0) params_.goal = Eigen::Vector3d(1.5, 0.0, 0.0);
  if (params_.goal.size() != 3) throw InvalidInput("quadruped: goal must have 3 entries");
  const double m = params_.mass;
  const double izz = params_.inertia_zz;
  if (params_.state_lower.size() == 0) {
    params_.state_lower.resize(9);
    params_.state_lower << -5.0, -5.0, -kPi, -3.0, -3.0, -3.0, -3.0 * m, -3.0 * m, -3.0 * izz;
  }
  if (params_.state_upper.size() == 0) {
    params_.state_upper.resize(9);
    params_.state_upper << 5.0, 5.0, kPi, 3.0, 3.0, 3.0, 3.0 * m, 3.0 * m, 3.0 * izz;
  }
  if (params_.reset_lower.size() == 0) {
    params_.reset_lower.resize(5);
    params_.reset_lower << -1.5, -1.5, -1.0, -1.0, -1.0;
  }
  if (params_.reset_upper.size() == 0) {
    params_.reset_upper.resize(5);
    params_.reset_upper << 2.5, 1.5, 1.0, 1.0, 1.0;
  }
  if (!(params_.reset_yaw >= 0.0)) throw InvalidInput("quadruped: reset_yaw must be nonnegative");
  if (params_.reset_lower.size() != 5 || params_.reset_upper.size() != 5) {
    throw InvalidInput("quadruped: reset box must have 5 entries (x, y, v_x, v_y, theta_dot)");
  }
  input_bounds_ = make_box(Vector::Constant(3, -1.0), Vector::Constant(3, 1.0), "quadruped input bounds");
  state_bounds_ = make_box(params_.state_lower, params_.state_upper, "quadruped state bounds");
  if (state_bounds_.dim() != 9) throw InvalidInput("quadruped: state bounds must have 9 entries");
}

Vector Quadruped::state_from_pose(double x, double y, double theta) const {
  Vector s = Vector::Zero(9);
  s(0) = x;
  s(1) = y;
  s(2) = wrap_angle(theta);
  return s;
}

Vector Quadruped::step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
  require_dims(x, u, 9, 3, "quadruped");
  const Vector uc = input_bounds_.clamp(u);
  const double m = params_.mass;
  const double izz = params_.inertia_zz;
  const double dt = params_.dt;
  const double c = std::cos(x(2));
  const double s = std::sin(x(2));

  Vector next(9);
  // Momentum first, then pose from the updated momentum.
  next(6) = x(6) + dt * m * (c * uc(0) - s * uc(1));
  next(7) = x(7) + dt * m * (s * uc(0) + c * uc(1));
  next(8) = x(8) + dt * izz * uc(2);
  const double xdot = next(6) / m;
  const double ydot = next(7) / m;
  const double thetadot = next(8) / izz;
  next(0) = x(0) + xdot * dt;
  next(1) = x(1) + ydot * dt;
  next(2) = wrap_angle(x(2) + thetadot * dt);
  const double c1 = std::cos(next(2));
  const double s1 = std::sin(next(2));
  next(3) = c1 * xdot + s1 * ydot;
  next(4) = -s1 * xdot + c1 * ydot;
  next(5) = thetadot;
  require_finite_state(next, "quadruped");
  return next;
}

double Quadruped::stage_cost(const Eigen::Ref<const Vector>& x) const {
  return quadruped_cost(quadruped_task_state(x, params_.goal));
}

Vector Quadruped::sample_reset(std::uint64_t stream, std::uint64_t& counter) const {
  const Vector& lo = params_.reset_lower;
  const Vector& hi = params_.reset_upper;
  const double px = draw(stream, counter, lo(0), hi(0));
  const double py = draw(stream, counter, lo(1), hi(1));
  const double theta = params_.goal(2) + draw(stream, counter, -params_.reset_yaw, params_.reset_yaw);
  const double vx = draw(stream, counter, lo(2), hi(2));
  const double vy = draw(stream, counter, lo(3), hi(3));
  const double w = draw(stream, counter, lo(4), hi(4));
  Vector x = state_from_pose(px, py, theta);
  const double c = std::cos(x(2));
  const double s = std::sin(x(2));
  x(3) = vx;
  x(4) = vy;
  x(5) = w;
  x(6) = params_.mass * (c * vx - s * vy);
  x(7) = params_.mass * (s * vx + c * vy);
  x(8) = params_.inertia_zz * w;
  return x;
}

bool Quadruped::at_goal(const Eigen::Ref<const Vector>& x) const {
  return quadruped_success(quadruped_task_state(x, params_.goal), params_.success_threshold);
}

double Quadruped::final_error(const Eigen::Ref<const Vector>& x) const {
  return quadruped_goal_error(quadruped_task_state(x, params_.goal));
}

double Quadruped::goal_distance(const Eigen::Ref<const Vector>& x) const {
  return (x.head<2>() - params_.goal.head<2>()).norm();
}

Vector Quadruped::learned_state(const Eigen::Ref<const Vector>& x) const {
  return quadruped_task_state(x, params_.goal);
}

Box Quadruped::learned_bounds() const {
  const Vector& lo = state_bounds_.lower;
  const Vector& hi = state_bounds_.upper;
  const Vector& g = params_.goal;
  // Body velocities share the world-speed bound.
  const double vmax = std::hypot(std::max(std::abs(lo(3)), std::abs(hi(3))),
                                 std::max(std::abs(lo(4)), std::abs(hi(4))));
  Vector l(8);
  Vector u(8);
  // One step past the wrap is reachable by a continued heading error.
  const double reach = std::max(std::abs(lo(5)), std::abs(hi(5))) * params_.dt;
  l << lo(0) - g(0), lo(1) - g(1), -kPi - reach, -1.0, -1.0, -vmax, -vmax, lo(5);
  u << hi(0) - g(0), hi(1) - g(1), kPi + reach, 1.0, 1.0, vmax, vmax, hi(5);
  return Box{l, u};
}

Vector Quadruped::learned_successor(const Eigen::Ref<const Vector>& x,
                                    const Eigen::Ref<const Vector>& x_next) const {
  const Vector s = learned_state(x);
  Vector s_next = learned_state(x_next);
  s_next(2) = s(2) + wrap_angle(x_next(2) - x(2));
  return s_next;
}

void Quadruped::rollout_advance(Matrix& Y, const Eigen::Ref<const Matrix>& Z) const {
  Y = Z;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) Y(2, j) = wrap_angle(Y(2, j));
}

void Quadruped::rollout_cost_add(const Eigen::Ref<const Matrix>& Y, double weight,
                                 Eigen::Ref<Vector> costs) const {
  costs.array() += weight * (6.0 * Y.row(0).array().square() + 20.0 * Y.row(1).array().square() +
                             4.5 * Y.row(2).array().square())
                                .transpose();
}

// ---------------------------------------------------------------------------
// Linear test plant

LinearPlant::LinearPlant(LinearParams params) : params_(std::move(params)) {
  const Eigen::Index n = params_.A.rows();
  if (n == 0 || params_.A.cols() != n || params_.B.rows() != n || params_.B.cols() == 0) {
    throw InvalidInput("linear plant: A must be n x n and B n x m");
  }
  numerics::require_finite(params_.A, "linear plant A");
  numerics::require_finite(params_.B, "linear plant B");
  const Eigen::Index m = params_.B.cols();
  input_bounds_ = symmetric_box(Vector::Constant(m, params_.input_bound), "linear input bounds");
  state_bounds_ = symmetric_box(Vector::Constant(n, params_.state_bound), "linear state bounds");
}

Vector LinearPlant::step(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
  require_dims(x, u, state_dim(), input_dim(), "linear plant");
  Vector next = params_.A * x + params_.B * input_bounds_.clamp(u);
  require_finite_state(next, "linear plant");
  return next;
}

Vector LinearPlant::sample_reset(std::uint64_t stream, std::uint64_t& counter) const {
  Vector x(state_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x(i) = draw(stream, counter, -params_.reset_bound, params_.reset_bound);
  }
  return x;
}

LinearParams random_stable_linear(int n, int m, std::uint64_t seed, double radius) {
  const std::uint64_t stream = numerics::stream_id({seed, 0x11AEA7ULL, 0});
  std::uint64_t counter = 0;
  LinearParams p;
  p.A.resize(n, n);
  p.B.resize(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) p.A(i, j) = draw(stream, counter, -1.0, 1.0);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) p.B(i, j) = draw(stream, counter, -1.0, 1.0);
  }
  const Eigen::EigenSolver<Matrix> eig(p.A, false);
  const double rho = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (rho > 0.0) p.A *= radius / rho;
  return p;
}

}  // namespace mppidk

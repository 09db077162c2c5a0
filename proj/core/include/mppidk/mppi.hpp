#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "mppidk/dko.hpp"
#include "mppidk/envs.hpp"
#include "mppidk/numerics.hpp"

namespace mppidk {

class ThreadPool;

enum class ControlCostMode {
  kSigma,       // gamma * u^T Sigma^-1 eps per step
  kQuadraticR,  // 0.5 u^T R u + gamma_u eps^T R eps + u^T R eps per step
};

enum class TailInit {
  kHoldLast,
  kZero,
};

struct MppiConfig {
  int horizon = 20;
  int num_rollouts = 100;
  Matrix sigma;  // m x m, PSD
  double lambda = 1.0;
  bool adaptive_lambda = false;
  double kappa = 0.5;
  // Unset: lambda for a fixed temperature, 0 for the adaptive one.
  std::optional<double> gamma;
  double nu = 1.0;
  Matrix R;  // m x m; empty selects identity
  ControlCostMode cost_mode = ControlCostMode::kSigma;
  bool smoothing = false;
  int smoothing_window = 9;  // clipped to the largest odd value <= T
  int smoothing_order = 3;
  double terminal_weight = 1.0;
  TailInit tail_init = TailInit::kHoldLast;
  std::uint64_t seed = 0;
  Box input_bounds;

  int input_dim() const { return static_cast<int>(input_bounds.dim()); }
  double effective_gamma() const;
  double gamma_u() const { return (nu - 1.0) / (2.0 * nu); }
  // Throws ConfigError.
  void validate() const;
};

// Nominal inputs, one column per horizon step (m x T).
using ControlSequence = Matrix;

// Noise for rollout n at step s is column n * T + s of an m x (N * T) matrix.
inline Eigen::Index noise_column(int horizon, int rollout, int step) {
  return static_cast<Eigen::Index>(rollout) * horizon + step;
}

// Per-(rollout, step) draws keyed by (master_seed, step_index, n * T + s).
Matrix sample_noise(const MppiConfig& cfg, std::uint64_t step_index, std::uint64_t master_seed,
                    ThreadPool* pool = nullptr);

// Applied inputs clamp(u_s + eps_{n,s}) in the noise layout.
Matrix applied_inputs(const ControlSequence& nominal, const Matrix& noise, const Box& bounds,
                      int num_rollouts);

// Control-cost part of S per rollout, evaluated on the applied perturbation
// v - u.
Vector control_costs(const MppiConfig& cfg, const ControlSequence& nominal, const Matrix& applied);

// Stage and terminal state costs of every rollout. Implementations process
// rollouts in fixed-size blocks, so the costs do not depend on the pool size.
class RolloutBackend {
 public:
  virtual ~RolloutBackend() = default;
  virtual std::string name() const = 0;
  virtual const Plant& plant() const = 0;

  // applied: m x (N * T) in the noise layout. Returns N costs; a diverged
  // rollout yields +inf.
  virtual Vector state_costs(const Eigen::Ref<const Vector>& x_t, const Matrix& applied, int horizon,
                             int num_rollouts, double terminal_weight, ThreadPool* pool) const = 0;

  // Lifting-network evaluations so far (0 for backends without a model).
  virtual std::uint64_t network_evaluations() const { return 0; }
  virtual void reset_counters() const {}
};

// Rollouts on the plant's own dynamics.
class TrueBackend final : public RolloutBackend {
 public:
  explicit TrueBackend(std::shared_ptr<const Plant> plant);
  std::string name() const override { return "true"; }
  const Plant& plant() const override { return *plant_; }
  Vector state_costs(const Eigen::Ref<const Vector>& x_t, const Matrix& applied, int horizon,
                     int num_rollouts, double terminal_weight, ThreadPool* pool) const override;

 private:
  std::shared_ptr<const Plant> plant_;
};

// Lifts x_t once and propagates g <- A g + B v in lifted space for every
// rollout.
class KoopmanBackend final : public RolloutBackend {
 public:
  KoopmanBackend(std::shared_ptr<const Plant> plant, std::shared_ptr<const KoopmanModel> model);
  std::string name() const override { return "dk"; }
  const Plant& plant() const override { return *plant_; }
  Vector state_costs(const Eigen::Ref<const Vector>& x_t, const Matrix& applied, int horizon,
                     int num_rollouts, double terminal_weight, ThreadPool* pool) const override;
  std::uint64_t network_evaluations() const override { return counter_.value(); }
  void reset_counters() const override { counter_.reset(); }

 private:
  std::shared_ptr<const Plant> plant_;
  std::shared_ptr<const KoopmanModel> model_;
  mutable LiftCounter counter_;
};

// Ablation: re-lifts every predicted state, N * T network calls per step.
class ReliftBackend final : public RolloutBackend {
 public:
  ReliftBackend(std::shared_ptr<const Plant> plant, std::shared_ptr<const KoopmanModel> model);
  std::string name() const override { return "relift"; }
  const Plant& plant() const override { return *plant_; }
  Vector state_costs(const Eigen::Ref<const Vector>& x_t, const Matrix& applied, int horizon,
                     int num_rollouts, double terminal_weight, ThreadPool* pool) const override;
  std::uint64_t network_evaluations() const override { return counter_.value(); }
  void reset_counters() const override { counter_.reset(); }

 private:
  std::shared_ptr<const Plant> plant_;
  std::shared_ptr<const KoopmanModel> model_;
  mutable LiftCounter counter_;
};

// w_n = exp(-(S_n - min S) / lambda), normalized; +inf costs get weight 0.
// Throws ControllerError if no cost is finite.
Vector compute_weights(const Eigen::Ref<const Vector>& costs, double lambda);

// Population standard deviation of the finite costs.
double finite_cost_std(const Eigen::Ref<const Vector>& costs);

// u(s) += sum_n w_n eps_n(s), clamped to bounds.
ControlSequence update_controls(const ControlSequence& nominal, const Matrix& noise,
                                const Eigen::Ref<const Vector>& weights, const Box& bounds);

// [u_0, ..., u_{T-1}] -> [u_1, ..., u_{T-1}, tail].
ControlSequence shift_warm_start(const ControlSequence& nominal, TailInit tail = TailInit::kHoldLast);

struct StepDiagnostics {
  double min_cost = 0.0;
  double mean_cost = 0.0;  // over finite costs
  double lambda = 0.0;
  double effective_sample_size = 0.0;
  Eigen::Index finite_rollouts = 0;
  double wall_us = 0.0;
};

struct StepResult {
  Vector u0;
  StepDiagnostics diagnostics;
  Vector costs;  // S per rollout
};

// Receding-horizon MPPI loop around one rollout backend.
class MppiController {
 public:
  MppiController(MppiConfig cfg, std::shared_ptr<const RolloutBackend> backend,
                 ThreadPool* pool = nullptr);

  // One optimization: sample, roll out, weight, update, emit u_0, shift. On
  // ControllerError the nominal sequence is left untouched.
  StepResult step(const Eigen::Ref<const Vector>& x_t);

  const MppiConfig& config() const { return cfg_; }
  const RolloutBackend& backend() const { return *backend_; }
  const ControlSequence& nominal() const { return nominal_; }
  std::uint64_t step_index() const { return step_index_; }

  // Resets the step counter and nominal (zeros clamped to bounds when empty).
  void reset(ControlSequence nominal = {});

 private:
  MppiConfig cfg_;
  std::shared_ptr<const RolloutBackend> backend_;
  ThreadPool* pool_;
  ControlSequence nominal_;
  std::uint64_t step_index_ = 0;
};

}  // namespace mppidk

#include "mppidk/mppi.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "mppidk/errors.hpp"
#include "mppidk/parallel.hpp"

namespace mppidk {

namespace {

constexpr int kNoiseBlock = 64;
constexpr double kMinLambda = 1e-12;

Matrix control_weight_matrix(const MppiConfig& cfg) {
  const int m = cfg.input_dim();
  return cfg.R.size() == 0 ? Matrix(Matrix::Identity(m, m)) : cfg.R;
}

void check_square(const Matrix& M, int m, const char* what) {
  if (M.rows() != m || M.cols() != m) {
    throw ConfigError(std::string("mppi: ") + what + " must be " + std::to_string(m) + " x " +
                      std::to_string(m));
  }
  if (!M.allFinite()) throw ConfigError(std::string("mppi: ") + what + " must be finite");
}

}  // namespace

double MppiConfig::effective_gamma() const {
  if (gamma) return *gamma;
  return adaptive_lambda ? 0.0 : lambda;
}

void MppiConfig::validate() const {
  if (horizon < 1) throw ConfigError("mppi: horizon must be >= 1");
  if (num_rollouts < 2) throw ConfigError("mppi: num_rollouts must be >= 2");
  try {
    input_bounds.validate("mppi input bounds");
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  const int m = input_dim();
  if (m < 1) throw ConfigError("mppi: input bounds are empty");
  check_square(sigma, m, "sigma");
  try {
    numerics::GaussianSampler check(sigma);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("mppi: sigma: ") + e.what());
  }
  if (adaptive_lambda) {
    if (!(kappa > 0.0)) throw ConfigError("mppi: kappa must be positive");
  } else if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("mppi: lambda must be positive");
  }
  if (!(effective_gamma() >= 0.0)) throw ConfigError("mppi: gamma must be nonnegative");
  if (!(nu >= 1.0)) throw ConfigError("mppi: nu must be >= 1");
  if (R.size() != 0) check_square(R, m, "R");
  if (smoothing) {
    if (smoothing_window < 3 || smoothing_window % 2 == 0) {
      throw ConfigError("mppi: smoothing window must be odd and >= 3");
    }
    if (smoothing_order < 0 || smoothing_order >= smoothing_window) {
      throw ConfigError("mppi: smoothing order must be in [0, window)");
    }
  }
  if (!(terminal_weight >= 0.0)) throw ConfigError("mppi: terminal_weight must be nonnegative");
}

Matrix sample_noise(const MppiConfig& cfg, std::uint64_t step_index, std::uint64_t master_seed,
                    ThreadPool* pool) {
  const int m = cfg.input_dim();
  const int T = cfg.horizon;
  const int N = cfg.num_rollouts;
  Matrix noise = Matrix::Zero(m, static_cast<Eigen::Index>(N) * T);
  const numerics::GaussianSampler sampler(cfg.sigma);
  if (sampler.is_zero()) return noise;

  const auto fill_block = [&](std::size_t block) {
    const int begin = static_cast<int>(block) * kNoiseBlock;
    const int end = std::min(N, begin + kNoiseBlock);
    for (int n = begin; n < end; ++n) {
      for (int s = 0; s < T; ++s) {
        const Eigen::Index col = noise_column(T, n, s);
        sampler.sample({master_seed, step_index, static_cast<std::uint64_t>(col)},
                       std::span<double>(noise.col(col).data(), static_cast<std::size_t>(m)));
      }
    }
  };
  const std::size_t blocks = static_cast<std::size_t>((N + kNoiseBlock - 1) / kNoiseBlock);
  if (pool) {
    pool->parallel_for(blocks, fill_block);
  } else {
    for (std::size_t b = 0; b < blocks; ++b) fill_block(b);
  }
  return noise;
}

Matrix applied_inputs(const ControlSequence& nominal, const Matrix& noise, const Box& bounds,
                      int num_rollouts) {
  const Eigen::Index T = nominal.cols();
  if (noise.rows() != nominal.rows() || noise.cols() != T * num_rollouts) {
    throw InvalidInput("applied_inputs: noise shape does not match the nominal sequence");
  }
  Matrix v(noise.rows(), noise.cols());
  for (int n = 0; n < num_rollouts; ++n) {
    auto block = v.middleCols(static_cast<Eigen::Index>(n) * T, T);
    block = nominal + noise.middleCols(static_cast<Eigen::Index>(n) * T, T);
    block = block.cwiseMax(bounds.lower.replicate(1, T)).cwiseMin(bounds.upper.replicate(1, T));
  }
  return v;
}

Vector control_costs(const MppiConfig& cfg, const ControlSequence& nominal, const Matrix& applied) {
  const Eigen::Index T = nominal.cols();
  const Eigen::Index N = applied.cols() / T;
  Vector costs = Vector::Zero(N);
  if (cfg.cost_mode == ControlCostMode::kSigma) {
    const double gamma = cfg.effective_gamma();
    if (gamma == 0.0) return costs;
    // u_s^T Sigma^-1 is shared by every rollout.
    const Matrix weighted = numerics::pinv(cfg.sigma).transpose() * nominal;  // m x T
    for (Eigen::Index n = 0; n < N; ++n) {
      double acc = 0.0;
      for (Eigen::Index s = 0; s < T; ++s) {
        acc += weighted.col(s).dot(applied.col(n * T + s) - nominal.col(s));
      }
      costs(n) = gamma * acc;
    }
    return costs;
  }
  const Matrix R = control_weight_matrix(cfg);
  const double gamma_u = cfg.gamma_u();
  double base = 0.0;
  for (Eigen::Index s = 0; s < T; ++s) base += 0.5 * nominal.col(s).dot(R * nominal.col(s));
  const Matrix Ru = R.transpose() * nominal;
  for (Eigen::Index n = 0; n < N; ++n) {
    double acc = base;
    for (Eigen::Index s = 0; s < T; ++s) {
      const Vector e = applied.col(n * T + s) - nominal.col(s);
      acc += gamma_u * e.dot(R * e) + Ru.col(s).dot(e);
    }
    costs(n) = acc;
  }
  return costs;
}

double finite_cost_std(const Eigen::Ref<const Vector>& costs) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < costs.size(); ++i) {
    if (std::isfinite(costs(i))) {
      sum += costs(i);
      ++count;
    }
  }
  if (count == 0) return 0.0;
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < costs.size(); ++i) {
    if (std::isfinite(costs(i))) sq += (costs(i) - mean) * (costs(i) - mean);
  }
  return std::sqrt(sq / static_cast<double>(count));
}

Vector compute_weights(const Eigen::Ref<const Vector>& costs, double lambda) {
  if (!(lambda > 0.0)) throw InvalidInput("compute_weights: lambda must be positive");
  double smin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < costs.size(); ++i) {
    if (std::isfinite(costs(i))) smin = std::min(smin, costs(i));
  }
  if (!std::isfinite(smin)) throw ControllerError("mppi: no rollout has a finite cost");
  Vector w(costs.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < costs.size(); ++i) {
    w(i) = std::isfinite(costs(i)) ? std::exp(-(costs(i) - smin) / lambda) : 0.0;
    total += w(i);
  }
  return w / total;
}

ControlSequence update_controls(const ControlSequence& nominal, const Matrix& noise,
                                const Eigen::Ref<const Vector>& weights, const Box& bounds) {
  const Eigen::Index T = nominal.cols();
  if (noise.cols() != T * weights.size() || noise.rows() != nominal.rows()) {
    throw InvalidInput("update_controls: noise shape does not match weights and nominal");
  }
  ControlSequence out = nominal;
  for (Eigen::Index n = 0; n < weights.size(); ++n) {
    if (weights(n) == 0.0) continue;
    out.noalias() += weights(n) * noise.middleCols(n * T, T);
  }
  for (Eigen::Index s = 0; s < T; ++s) out.col(s) = bounds.clamp(out.col(s));
  return out;
}

ControlSequence shift_warm_start(const ControlSequence& nominal, TailInit tail) {
  const Eigen::Index T = nominal.cols();
  ControlSequence out(nominal.rows(), T);
  if (T == 0) return out;
  out.leftCols(T - 1) = nominal.rightCols(T - 1);
  if (tail == TailInit::kHoldLast) {
    out.col(T - 1) = nominal.col(T - 1);
  } else {
    out.col(T - 1).setZero();
  }
  return out;
}

// ---------------------------------------------------------------------------

MppiController::MppiController(MppiConfig cfg, std::shared_ptr<const RolloutBackend> backend,
                               ThreadPool* pool)
    : cfg_(std::move(cfg)), backend_(std::move(backend)), pool_(pool) {
  cfg_.validate();
  if (!backend_) throw ConfigError("mppi: no rollout backend");
  if (backend_->plant().input_dim() != cfg_.input_dim()) {
    throw ConfigError("mppi: input bounds do not match the plant input dimension");
  }
  reset();
}

void MppiController::reset(ControlSequence nominal) {
  const int m = cfg_.input_dim();
  if (nominal.size() == 0) {
    nominal = Matrix::Zero(m, cfg_.horizon);
  } else if (nominal.rows() != m || nominal.cols() != cfg_.horizon) {
    throw InvalidInput("mppi: initial nominal must be m x horizon");
  }
  for (Eigen::Index s = 0; s < nominal.cols(); ++s) {
    nominal.col(s) = cfg_.input_bounds.clamp(nominal.col(s));
  }
  nominal_ = std::move(nominal);
  step_index_ = 0;
}

StepResult MppiController::step(const Eigen::Ref<const Vector>& x_t) {
  const auto start = std::chrono::steady_clock::now();
  const int N = cfg_.num_rollouts;
  const int T = cfg_.horizon;

  const Matrix noise = sample_noise(cfg_, step_index_, cfg_.seed, pool_);
  const Matrix applied = applied_inputs(nominal_, noise, cfg_.input_bounds, N);
  Vector costs = backend_->state_costs(x_t, applied, T, N, cfg_.terminal_weight, pool_);
  costs += control_costs(cfg_, nominal_, applied);
  for (Eigen::Index n = 0; n < costs.size(); ++n) {
    if (!std::isfinite(costs(n))) costs(n) = std::numeric_limits<double>::infinity();
  }

  StepDiagnostics diag;
  diag.lambda = cfg_.adaptive_lambda ? std::max(cfg_.kappa * finite_cost_std(costs), kMinLambda)
                                     : cfg_.lambda;
  ++step_index_;
  const Vector w = compute_weights(costs, diag.lambda);

  ControlSequence updated = update_controls(nominal_, noise, w, cfg_.input_bounds);
  if (cfg_.smoothing) {
    const int window = numerics::savgol_window_for(cfg_.smoothing_window, T, cfg_.smoothing_order);
    if (window > 0) {
      updated = numerics::savgol_smooth(updated, window, cfg_.smoothing_order);
      for (Eigen::Index s = 0; s < T; ++s) updated.col(s) = cfg_.input_bounds.clamp(updated.col(s));
    }
  }

  StepResult result;
  result.u0 = updated.col(0);
  nominal_ = shift_warm_start(updated, cfg_.tail_init);

  double sum = 0.0;
  diag.min_cost = std::numeric_limits<double>::infinity();
  for (Eigen::Index n = 0; n < costs.size(); ++n) {
    if (!std::isfinite(costs(n))) continue;
    ++diag.finite_rollouts;
    sum += costs(n);
    diag.min_cost = std::min(diag.min_cost, costs(n));
  }
  diag.mean_cost = sum / static_cast<double>(diag.finite_rollouts);
  diag.effective_sample_size = 1.0 / w.squaredNorm();
  diag.wall_us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
  result.diagnostics = diag;
  result.costs = std::move(costs);
  return result;
}

}  // namespace mppidk

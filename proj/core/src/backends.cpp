#include <cmath>
#include <limits>

#include "mppidk/errors.hpp"
#include "mppidk/mppi.hpp"
#include "mppidk/parallel.hpp"

namespace mppidk {

namespace {

// Rollouts per work item. Fixed so that block boundaries, and therefore every
// floating-point result, are independent of the worker count.
constexpr int kRolloutBlock = 64;

template <typename Fn>
void for_each_block(int num_rollouts, ThreadPool* pool, Fn&& fn) {
  const std::size_t blocks = static_cast<std::size_t>((num_rollouts + kRolloutBlock - 1) / kRolloutBlock);
  const auto run = [&](std::size_t b) {
    const int begin = static_cast<int>(b) * kRolloutBlock;
    fn(begin, std::min(num_rollouts, begin + kRolloutBlock));
  };
  if (pool && blocks > 1) {
    pool->parallel_for(blocks, run);
  } else {
    for (std::size_t b = 0; b < blocks; ++b) run(b);
  }
}

void check_shapes(const Plant& plant, const Eigen::Ref<const Vector>& x_t, const Matrix& applied,
                  int horizon, int num_rollouts) {
  if (x_t.size() != plant.state_dim()) throw InvalidInput("rollout: state dimension mismatch");
  if (applied.rows() != plant.input_dim() ||
      applied.cols() != static_cast<Eigen::Index>(horizon) * num_rollouts) {
    throw InvalidInput("rollout: applied input matrix has the wrong shape");
  }
}

// Inputs of rollouts [begin, end) at step s, one column per rollout.
void gather_step(const Matrix& applied, int horizon, int begin, int end, int s, Matrix& V) {
  for (int n = begin; n < end; ++n) V.col(n - begin) = applied.col(noise_column(horizon, n, s));
}

void check_model(const Plant& plant, const KoopmanModel& model) {
  model.validate();
  if (model.state_dim() != plant.learned_dim() || model.input_dim() != plant.input_dim()) {
    throw ConfigError("model dimensions do not match the plant's learned state and input");
  }
}

}  // namespace

TrueBackend::TrueBackend(std::shared_ptr<const Plant> plant) : plant_(std::move(plant)) {
  if (!plant_) throw ConfigError("true backend: no plant");
}

Vector TrueBackend::state_costs(const Eigen::Ref<const Vector>& x_t, const Matrix& applied,
                                int horizon, int num_rollouts, double terminal_weight,
                                ThreadPool* pool) const {
  check_shapes(*plant_, x_t, applied, horizon, num_rollouts);
  Vector costs(num_rollouts);
  const Vector x0 = x_t;
  for_each_block(num_rollouts, pool, [&](int begin, int end) {
    for (int n = begin; n < end; ++n) {
      Vector x = x0;
      double S = 0.0;
      try {
        for (int s = 0; s < horizon; ++s) {
          x = plant_->step(x, applied.col(noise_column(horizon, n, s)));
          S += plant_->stage_cost(x);
        }
        S += terminal_weight * plant_->stage_cost(x);
      } catch (const SimulationError&) {
        S = std::numeric_limits<double>::infinity();
      }
      costs(n) = S;
    }
  });
  return costs;
}

KoopmanBackend::KoopmanBackend(std::shared_ptr<const Plant> plant,
                               std::shared_ptr<const KoopmanModel> model)
    : plant_(std::move(plant)), model_(std::move(model)) {
  if (!plant_ || !model_) throw ConfigError("dk backend: plant and model are required");
  check_model(*plant_, *model_);
}

Vector KoopmanBackend::state_costs(const Eigen::Ref<const Vector>& x_t, const Matrix& applied,
                                   int horizon, int num_rollouts, double terminal_weight,
                                   ThreadPool* pool) const {
  check_shapes(*plant_, x_t, applied, horizon, num_rollouts);
  const KoopmanModel& km = *model_;
  // The only network evaluation of this control step.
  const Vector g0 = km.net.forward(plant_->learned_state(x_t));
  counter_.add(1);
  const Vector y0 = plant_->rollout_state(x_t);
  const int m = plant_->input_dim();

  Vector costs(num_rollouts);
  for_each_block(num_rollouts, pool, [&](int begin, int end) {
    const int nb = end - begin;
    Matrix G = g0.replicate(1, nb);
    Matrix Gn(G.rows(), nb);
    Matrix Y = y0.replicate(1, nb);
    Matrix Z(km.C.rows(), nb);
    Matrix V(m, nb);
    Vector S = Vector::Zero(nb);
    for (int s = 0; s < horizon; ++s) {
      gather_step(applied, horizon, begin, end, s, V);
      Gn.noalias() = km.A * G;
      Gn.noalias() += km.B * V;
      G.swap(Gn);
      Z.noalias() = km.C * G;
      plant_->rollout_advance(Y, Z);
      plant_->rollout_cost_add(Y, 1.0, S);
    }
    plant_->rollout_cost_add(Y, terminal_weight, S);
    costs.segment(begin, nb) = S;
  });
  return costs;
}

ReliftBackend::ReliftBackend(std::shared_ptr<const Plant> plant,
                             std::shared_ptr<const KoopmanModel> model)
    : plant_(std::move(plant)), model_(std::move(model)) {
  if (!plant_ || !model_) throw ConfigError("relift backend: plant and model are required");
  check_model(*plant_, *model_);
}

Vector ReliftBackend::state_costs(const Eigen::Ref<const Vector>& x_t, const Matrix& applied,
                                  int horizon, int num_rollouts, double terminal_weight,
                                  ThreadPool* pool) const {
  check_shapes(*plant_, x_t, applied, horizon, num_rollouts);
  const KoopmanModel& km = *model_;
  const Vector y0 = plant_->rollout_state(x_t);
  const int m = plant_->input_dim();

  Vector costs(num_rollouts);
  for_each_block(num_rollouts, pool, [&](int begin, int end) {
    const int nb = end - begin;
    Matrix Y = y0.replicate(1, nb);
    Matrix V(m, nb);
    Vector S = Vector::Zero(nb);
    for (int s = 0; s < horizon; ++s) {
      gather_step(applied, horizon, begin, end, s, V);
      const Matrix G = km.net.forward_batch(plant_->rollout_learned(Y));
      counter_.add(static_cast<std::uint64_t>(nb));
      const Matrix Z = km.C * (km.A * G + km.B * V);
      plant_->rollout_advance(Y, Z);
      plant_->rollout_cost_add(Y, 1.0, S);
    }
    plant_->rollout_cost_add(Y, terminal_weight, S);
    costs.segment(begin, nb) = S;
  });
  return costs;
}

}  // namespace mppidk

#include "mppidk/dko.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "mppidk/errors.hpp"
#include "mppidk/parallel.hpp"

namespace mppidk {

namespace {

// Column chunk for parallel map-reduce over tuples. Fixed so results do not
// depend on how many threads run the chunks.
constexpr Eigen::Index kChunkColumns = 128;

Eigen::Index num_chunks(Eigen::Index cols) {
  return (cols + kChunkColumns - 1) / kChunkColumns;
}

void run_chunks(Eigen::Index cols, ThreadPool* pool,
                const std::function<void(std::size_t, Eigen::Index, Eigen::Index)>& fn) {
  const Eigen::Index chunks = num_chunks(cols);
  auto task = [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * kChunkColumns;
    const Eigen::Index count = std::min(kChunkColumns, cols - begin);
    fn(c, begin, count);
  };
  if (pool != nullptr) {
    pool->parallel_for(static_cast<std::size_t>(chunks), task);
  } else {
    for (Eigen::Index c = 0; c < chunks; ++c) task(static_cast<std::size_t>(c));
  }
}

Matrix lift_columns(const LiftingNetwork& net, const Matrix& xs, ThreadPool* pool) {
  Matrix out(net.lift_dim(), xs.cols());
  run_chunks(xs.cols(), pool, [&](std::size_t, Eigen::Index begin, Eigen::Index count) {
    out.middleCols(begin, count) = net.forward_batch(xs.middleCols(begin, count));
  });
  return out;
}

Matrix gather(const Matrix& m, const std::vector<Eigen::Index>& idx) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
  return out;
}

std::vector<Eigen::Index> shuffled(Eigen::Index size, std::uint64_t stream) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(size));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = size - 1; i > 0; --i) {
    const double u = numerics::counter_uniform(stream, static_cast<std::uint64_t>(i));
    const auto j = std::min<Eigen::Index>(static_cast<Eigen::Index>(u * static_cast<double>(i + 1)), i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

void require_same_columns(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols() != b.cols()) throw InvalidInput(std::string(what) + ": column counts differ");
}

}  // namespace

// ---------------------------------------------------------------------------

void TransitionDataset::validate() const {
  if (states.cols() != inputs.cols() || states.cols() != next_states.cols()) {
    throw InvalidInput("dataset: x, u and x+ must have the same number of tuples");
  }
  if (states.rows() != next_states.rows()) {
    throw InvalidInput("dataset: x and x+ dimensions differ");
  }
  state_bounds.validate("dataset state bounds");
  input_bounds.validate("dataset input bounds");
  if (state_bounds.dim() != states.rows() || input_bounds.dim() != inputs.rows()) {
    throw InvalidInput("dataset: bounds do not match the state/input dimensions");
  }
  numerics::require_finite(states, "dataset states");
  numerics::require_finite(inputs, "dataset inputs");
  numerics::require_finite(next_states, "dataset next states");
  for (Eigen::Index i = 0; i < size(); ++i) {
    if (!state_bounds.contains(states.col(i)) || !state_bounds.contains(next_states.col(i))) {
      throw InvalidInput("dataset: tuple " + std::to_string(i) + " has a state outside the bounds");
    }
    if (!input_bounds.contains(inputs.col(i))) {
      throw InvalidInput("dataset: tuple " + std::to_string(i) + " has an input outside the bounds");
    }
  }
}

TransitionDataset TransitionDataset::select(const std::vector<Eigen::Index>& indices) const {
  TransitionDataset out;
  out.states = gather(states, indices);
  out.inputs = gather(inputs, indices);
  out.next_states = gather(next_states, indices);
  out.state_bounds = state_bounds;
  out.input_bounds = input_bounds;
  return out;
}

bool TransitionDataset::operator==(const TransitionDataset& o) const {
  return states == o.states && inputs == o.inputs && next_states == o.next_states &&
         state_bounds.lower == o.state_bounds.lower &&
         state_bounds.upper == o.state_bounds.upper &&
         input_bounds.lower == o.input_bounds.lower && input_bounds.upper == o.input_bounds.upper;
}

void KoopmanModel::validate() const {
  const Eigen::Index r = net.lift_dim();
  if (A.rows() != r || A.cols() != r) throw InvalidInput("model: A must be r x r");
  if (B.rows() != r) throw InvalidInput("model: B must have r rows");
  if (C.rows() != net.input_dim() || C.cols() != r) throw InvalidInput("model: C must be n x r");
  numerics::require_finite(A, "model A");
  numerics::require_finite(B, "model B");
  numerics::require_finite(C, "model C");
}

bool KoopmanModel::operator==(const KoopmanModel& o) const {
  return A == o.A && B == o.B && C == o.C && net == o.net;
}

// ---------------------------------------------------------------------------

DataMatrices build_data_matrices(const TransitionDataset& data, const LiftingNetwork& net) {
  if (data.size() == 0) throw InvalidInput("build_data_matrices: empty dataset");
  if (data.state_dim() != net.input_dim()) {
    throw InvalidInput("build_data_matrices: dataset state dimension does not match the network");
  }
  DataMatrices dm;
  dm.X = data.states;
  dm.U = data.inputs;
  dm.Xbar = data.next_states;
  dm.G = lift_columns(net, data.states, nullptr);
  dm.Gbar = lift_columns(net, data.next_states, nullptr);
  return dm;
}

LinearFit fit_ABC(const Matrix& G, const Matrix& Gbar, const Matrix& U, const Matrix& Xbar,
                  double tol) {
  require_same_columns(G, Gbar, "fit_ABC");
  require_same_columns(G, U, "fit_ABC");
  require_same_columns(G, Xbar, "fit_ABC");
  if (G.rows() != Gbar.rows()) throw InvalidInput("fit_ABC: G and Gbar row counts differ");
  const Eigen::Index r = G.rows();
  const Eigen::Index m = U.rows();

  Matrix stacked(r + m, G.cols());
  stacked.topRows(r) = G;
  stacked.bottomRows(m) = U;

  const numerics::PinvResult stacked_pinv = numerics::pinv_with_rank(stacked, tol);
  const numerics::PinvResult gbar_pinv = numerics::pinv_with_rank(Gbar, tol);

  const Matrix AB = Gbar * stacked_pinv.pinv;
  LinearFit fit;
  fit.A = AB.leftCols(r);
  fit.B = AB.rightCols(m);
  fit.C = Xbar * gbar_pinv.pinv;
  fit.truncated = stacked_pinv.truncated() || gbar_pinv.truncated();
  return fit;
}

double prediction_residual(const Matrix& A, const Matrix& B, const DataMatrices& dm) {
  return (dm.Gbar - A * dm.G - B * dm.U).squaredNorm();
}

double loss_Lf(const KoopmanModel& model, const DataMatrices& dm) {
  const double M = static_cast<double>(dm.G.cols());
  const double pred = prediction_residual(model.A, model.B, dm);
  const double recon = (dm.Xbar - model.C * dm.Gbar).squaredNorm();
  return (pred + recon) / (2.0 * M);
}

double loss_Lf(const KoopmanModel& model, const TransitionDataset& data) {
  return loss_Lf(model, build_data_matrices(data, model.net));
}

Vector grad_theta(const KoopmanModel& model, const Eigen::Ref<const Matrix>& X,
                  const Eigen::Ref<const Matrix>& U, const Eigen::Ref<const Matrix>& Xbar,
                  ThreadPool* pool) {
  if (X.cols() != U.cols() || X.cols() != Xbar.cols()) {
    throw InvalidInput("grad_theta: batch column counts differ");
  }
  const Eigen::Index batch = X.cols();
  const LiftingNetwork& net = model.net;
  if (batch == 0) return Vector::Zero(net.num_parameters());
  const double inv_m = 1.0 / static_cast<double>(batch);

  std::vector<Vector> partial(static_cast<std::size_t>(num_chunks(batch)));
  run_chunks(batch, pool, [&](std::size_t c, Eigen::Index begin, Eigen::Index count) {
    const auto x = X.middleCols(begin, count);
    const auto u = U.middleCols(begin, count);
    const auto xbar = Xbar.middleCols(begin, count);
    const Matrix g = net.forward_batch(x);
    const Matrix gbar = net.forward_batch(xbar);
    const Matrix pred_res = gbar - model.A * g - model.B * u;
    const Matrix recon_res = xbar - model.C * gbar;
    const Matrix up_next = inv_m * (pred_res - model.C.transpose() * recon_res);
    const Matrix up_curr = -inv_m * (model.A.transpose() * pred_res);
    partial[c] = net.backward(xbar, up_next) + net.backward(x, up_curr);
  });

  Vector grad = Vector::Zero(net.num_parameters());
  for (const Vector& p : partial) grad += p;
  return grad;
}

Vector predict_one_step(const KoopmanModel& model, const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& v) {
  if (v.size() != model.input_dim()) throw InvalidInput("predict_one_step: input dimension mismatch");
  return model.C * (model.A * model.net.forward(x) + model.B * v);
}

Matrix rollout_lifted(const KoopmanModel& model, const Eigen::Ref<const Vector>& x0,
                      const Eigen::Ref<const Matrix>& inputs, LiftCounter* counter) {
  if (inputs.rows() != model.input_dim()) throw InvalidInput("rollout_lifted: input dimension mismatch");
  Vector g = model.net.forward(x0);
  if (counter != nullptr) counter->add(1);
  Matrix out(model.state_dim(), inputs.cols());
  for (Eigen::Index s = 0; s < inputs.cols(); ++s) {
    g = model.A * g + model.B * inputs.col(s);
    out.col(s) = model.C * g;
  }
  return out;
}

Matrix rollout_relifted(const KoopmanModel& model, const Eigen::Ref<const Vector>& x0,
                        const Eigen::Ref<const Matrix>& inputs, LiftCounter* counter) {
  if (inputs.rows() != model.input_dim()) throw InvalidInput("rollout_relifted: input dimension mismatch");
  Vector x = x0;
  Matrix out(model.state_dim(), inputs.cols());
  for (Eigen::Index s = 0; s < inputs.cols(); ++s) {
    const Vector g = model.net.forward(x);
    if (counter != nullptr) counter->add(1);
    x = model.C * (model.A * g + model.B * inputs.col(s));
    out.col(s) = x;
  }
  return out;
}

double one_step_rmse(const KoopmanModel& model, const TransitionDataset& data) {
  if (data.size() == 0) return 0.0;
  const DataMatrices dm = build_data_matrices(data, model.net);
  const Matrix pred = model.C * (model.A * dm.G + model.B * dm.U);
  return std::sqrt((pred - dm.Xbar).squaredNorm() / static_cast<double>(pred.size()));
}

// ---------------------------------------------------------------------------

void DkoTrainConfig::validate() const {
  if (epochs < 0) throw InvalidInput("train: epochs must be nonnegative");
  if (minibatch_size <= 0) throw InvalidInput("train: minibatch_size must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InvalidInput("train: validation_fraction must lie in [0, 1)");
  }
  if (refit_cadence <= 0) throw InvalidInput("train: refit_cadence must be positive");
  if (!(adam.learning_rate > 0.0)) throw InvalidInput("train: learning rate must be positive");
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices(
    Eigen::Index size, double validation_fraction, std::uint64_t seed) {
  const std::vector<Eigen::Index> perm =
      shuffled(size, numerics::stream_id({seed, 0x5B117ULL, 0}));
  auto num_val = static_cast<Eigen::Index>(std::floor(validation_fraction * static_cast<double>(size)));
  num_val = std::min(num_val, size - 1);
  num_val = std::max<Eigen::Index>(num_val, 0);
  std::vector<Eigen::Index> val(perm.begin(), perm.begin() + num_val);
  std::vector<Eigen::Index> train(perm.begin() + num_val, perm.end());
  return {std::move(train), std::move(val)};
}

TrainResult train_dko(const TransitionDataset& data, const LiftingArchitecture& arch,
                      const DkoTrainConfig& cfg, std::uint64_t seed, ThreadPool* pool) {
  cfg.validate();
  arch.validate();
  data.validate();
  if (data.state_dim() != arch.input_dim) {
    throw InvalidInput("train: dataset state dimension " + std::to_string(data.state_dim()) +
                       " does not match lifting input dimension " + std::to_string(arch.input_dim));
  }

  auto [train_idx, val_idx] = split_indices(data.size(), cfg.validation_fraction, seed);
  const TransitionDataset train = data.select(train_idx);
  const TransitionDataset val = data.select(val_idx);
  const Eigen::Index needed = arch.lift_dim() + data.input_dim();
  if (train.size() < needed) {
    throw InvalidInput("train: need at least r + m = " + std::to_string(needed) +
                       " training tuples, have " + std::to_string(train.size()));
  }

  TrainResult result;
  TrainLog& log = result.log;
  log.train_size = train.size();
  log.validation_size = val.size();

  KoopmanModel& model = result.model;
  model.net = lift_init(arch, seed);
  if (cfg.normalize_inputs) {
    const Vector mean = train.states.rowwise().mean();
    const Vector var =
        (train.states.colwise() - mean).array().square().rowwise().mean();
    Vector scale(var.size());
    for (Eigen::Index i = 0; i < var.size(); ++i) {
      const double sd = std::sqrt(var(i));
      scale(i) = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    model.net.set_normalization({mean, scale});
  }

  auto refit = [&](const LiftingNetwork& net, int epoch) {
    DataMatrices dm;
    dm.X = train.states;
    dm.U = train.inputs;
    dm.Xbar = train.next_states;
    dm.G = lift_columns(net, train.states, pool);
    dm.Gbar = lift_columns(net, train.next_states, pool);
    LinearFit fit = fit_ABC(dm.G, dm.Gbar, dm.U, dm.Xbar, cfg.pinv_tolerance);
    if (fit.truncated) {
      log.warnings.push_back("epoch " + std::to_string(epoch) +
                             ": rank-deficient data matrix, pseudoinverse truncated");
    }
    KoopmanModel fitted{fit.A, fit.B, fit.C, net};
    const double loss = loss_Lf(fitted, dm);
    return std::pair<KoopmanModel, double>(std::move(fitted), loss);
  };
  auto validation_rmse = [&](const KoopmanModel& m) {
    return one_step_rmse(m, val.size() > 0 ? val : train);
  };

  {
    auto [fitted, loss] = refit(model.net, 0);
    model = std::move(fitted);
    if (!std::isfinite(loss)) throw TrainingError("train: non-finite initial loss");
  }

  AdamState adam = AdamState::zeros(model.net.num_parameters(), cfg.adam);
  Vector theta = model.net.parameters();
  const Eigen::Index batch_size = std::min<Eigen::Index>(cfg.minibatch_size, train.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (model.net.num_parameters() > 0) {
      const std::vector<Eigen::Index> order = shuffled(
          train.size(), numerics::stream_id({seed, 0xE90C4ULL, static_cast<std::uint64_t>(epoch)}));
      for (Eigen::Index begin = 0; begin < train.size(); begin += batch_size) {
        const Eigen::Index count = std::min(batch_size, train.size() - begin);
        std::vector<Eigen::Index> cols(order.begin() + begin, order.begin() + begin + count);
        const Vector grad = grad_theta(model, gather(train.states, cols),
                                       gather(train.inputs, cols),
                                       gather(train.next_states, cols), pool);
        if (!grad.allFinite()) {
          throw TrainingError("train: non-finite gradient in epoch " + std::to_string(epoch));
        }
        adam_step(adam, theta, grad);
        model.net.set_parameters(theta);
      }
    }

    // Evaluate with A, B, C refit to the updated network; adopt that fit when
    // the next epoch is due for a refit.
    auto [fitted, loss] = refit(model.net, epoch + 1);
    if (!std::isfinite(loss)) {
      throw TrainingError("train: non-finite loss after epoch " + std::to_string(epoch));
    }
    const double rmse = validation_rmse(fitted);
    log.epochs.push_back({epoch, loss, rmse});
    if ((epoch + 1) % cfg.refit_cadence == 0) {
      model.A = fitted.A;
      model.B = fitted.B;
      model.C = fitted.C;
    }
  }

  auto [fitted, loss] = refit(model.net, cfg.epochs);
  if (!std::isfinite(loss)) throw TrainingError("train: non-finite final loss");
  model = std::move(fitted);
  log.final_train_loss = loss;
  log.final_validation_rmse = validation_rmse(model);
  return result;
}

}  // namespace mppidk

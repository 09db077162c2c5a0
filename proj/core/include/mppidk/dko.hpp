#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mppidk/lifting.hpp"
#include "mppidk/numerics.hpp"

namespace mppidk {

class ThreadPool;

// Unordered (x, u, x+) tuples stored column-wise: column i of each matrix is
// tuple i.
struct TransitionDataset {
  Matrix states;       // n x M
  Matrix inputs;       // m x M
  Matrix next_states;  // n x M
  Box state_bounds;
  Box input_bounds;

  Eigen::Index size() const { return states.cols(); }
  int state_dim() const { return static_cast<int>(states.rows()); }
  int input_dim() const { return static_cast<int>(inputs.rows()); }

  // Shapes, finiteness and bound membership; throws InvalidInput.
  void validate() const;

  // Tuples at the given column indices, in that order.
  TransitionDataset select(const std::vector<Eigen::Index>& indices) const;

  bool operator==(const TransitionDataset& other) const;
};

// The learned surrogate x+ = C (A g(x) + B u).
struct KoopmanModel {
  Matrix A;  // r x r
  Matrix B;  // r x m
  Matrix C;  // n x r
  LiftingNetwork net;

  int state_dim() const { return net.input_dim(); }
  int lift_dim() const { return net.lift_dim(); }
  int input_dim() const { return static_cast<int>(B.cols()); }

  void validate() const;
  bool operator==(const KoopmanModel& other) const;
};

struct DataMatrices {
  Matrix X;      // n x M
  Matrix U;      // m x M
  Matrix Xbar;   // n x M
  Matrix G;      // r x M, lifted states
  Matrix Gbar;   // r x M, lifted next states
};

DataMatrices build_data_matrices(const TransitionDataset& data, const LiftingNetwork& net);

struct LinearFit {
  Matrix A;
  Matrix B;
  Matrix C;
  bool truncated = false;  // a pseudoinverse dropped singular values
};

// Closed-form least-squares [A B] = Gbar pinv([G; U]) and C = Xbar pinv(Gbar).
LinearFit fit_ABC(const Matrix& G, const Matrix& Gbar, const Matrix& U, const Matrix& Xbar,
                  double tol = numerics::kDefaultPinvTolerance);

// Prediction residual ||Gbar - [A B][G; U]||_F^2.
double prediction_residual(const Matrix& A, const Matrix& B, const DataMatrices& dm);

// (1 / 2M) sum_i ||g(x+) - A g(x) - B u||^2 + ||x+ - C g(x+)||^2
double loss_Lf(const KoopmanModel& model, const TransitionDataset& data);
double loss_Lf(const KoopmanModel& model, const DataMatrices& dm);

// Gradient of loss_Lf over the batch columns wrt theta with A, B, C held fixed.
// Columns are processed in fixed-size chunks reduced in index order, so the
// result does not depend on the pool size.
Vector grad_theta(const KoopmanModel& model, const Eigen::Ref<const Matrix>& X,
                  const Eigen::Ref<const Matrix>& U, const Eigen::Ref<const Matrix>& Xbar,
                  ThreadPool* pool = nullptr);

Vector predict_one_step(const KoopmanModel& model, const Eigen::Ref<const Vector>& x,
                        const Eigen::Ref<const Vector>& v);

// Lifts x0 once and propagates g <- A g + B v; column s of the result is the
// predicted state after inputs.col(0..s).
Matrix rollout_lifted(const KoopmanModel& model, const Eigen::Ref<const Vector>& x0,
                      const Eigen::Ref<const Matrix>& inputs, LiftCounter* counter = nullptr);

// Reference path that re-lifts every predicted state (one network call per step).
Matrix rollout_relifted(const KoopmanModel& model, const Eigen::Ref<const Vector>& x0,
                        const Eigen::Ref<const Matrix>& inputs, LiftCounter* counter = nullptr);

// Root-mean-square one-step prediction error over all tuples and state dims.
double one_step_rmse(const KoopmanModel& model, const TransitionDataset& data);

struct DkoTrainConfig {
  int epochs = 100;
  int minibatch_size = 256;
  AdamConfig adam;
  double validation_fraction = 0.1;
  int refit_cadence = 1;
  double pinv_tolerance = numerics::kDefaultPinvTolerance;
  // Per-dimension affine input normalization computed from the training split.
  bool normalize_inputs = false;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_rmse = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<std::string> warnings;
  double final_train_loss = 0.0;
  double final_validation_rmse = 0.0;
  Eigen::Index train_size = 0;
  Eigen::Index validation_size = 0;
};

struct TrainResult {
  KoopmanModel model;
  TrainLog log;
};

// Alternating training: closed-form A, B, C refits on the training split every
// refit_cadence epochs, Adam steps on theta in between. The returned model is
// refit on the training split after the last epoch. Throws TrainingError on a
// non-finite loss.
TrainResult train_dko(const TransitionDataset& data, const LiftingArchitecture& arch,
                      const DkoTrainConfig& cfg, std::uint64_t seed,
                      ThreadPool* pool = nullptr);

// Deterministic shuffle-and-split; returns {train indices, validation indices}.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_indices(
    Eigen::Index size, double validation_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Files. Formats are documented in docs/file_formats.md.

void write_dataset(const TransitionDataset& data, const std::filesystem::path& path);
TransitionDataset read_dataset(const std::filesystem::path& path);
std::string dataset_to_string(const TransitionDataset& data);
TransitionDataset dataset_from_string(const std::string& text);

void write_model(const KoopmanModel& model, const std::filesystem::path& path);
KoopmanModel read_model(const std::filesystem::path& path);
std::string model_to_string(const KoopmanModel& model);
KoopmanModel model_from_string(const std::string& text);

}  // namespace mppidk

#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mppidk/numerics.hpp"

namespace mppidk {

enum class HiddenActivation { kReLU };
enum class OutputActivation { kTanh };

// Shape of the lifting function g: R^n -> R^r.
//
// The network maps n inputs through the hidden ReLU layers to `net_output_dim`
// Tanh outputs. With append_state the raw input is stacked on top of the
// network output, g(x) = [x; net(x)], so lift_dim() = n + net_output_dim.
// append_constant adds a trailing constant observable 1, which gives the
// linear lifted model an affine offset.
// net_output_dim == 0 with append_state gives the identity lifting g(x) = x.
struct LiftingArchitecture {
  int input_dim = 0;
  std::vector<int> hidden_sizes;
  int net_output_dim = 0;
  bool append_state = false;
  bool append_constant = false;
  HiddenActivation hidden_activation = HiddenActivation::kReLU;
  OutputActivation output_activation = OutputActivation::kTanh;

  int state_rows() const { return append_state ? input_dim : 0; }
  int lift_dim() const { return state_rows() + net_output_dim + (append_constant ? 1 : 0); }
  bool has_network() const { return net_output_dim > 0; }

  // Throws InvalidInput unless the shape is usable (r >= n, positive sizes).
  void validate() const;

  static LiftingArchitecture mlp(int input_dim, std::vector<int> hidden, int lift_dim);
  static LiftingArchitecture identity(int input_dim);

  bool operator==(const LiftingArchitecture&) const = default;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Per-sample affine input map applied before the first layer:
// x_in = (x - offset) .* scale. Identity unless normalization was requested.
struct InputNormalization {
  Vector offset;
  Vector scale;
};

class LiftingNetwork {
 public:
  LiftingNetwork() = default;
  LiftingNetwork(LiftingArchitecture arch, std::vector<DenseLayer> layers,
                 InputNormalization norm);

  // Glorot-uniform weights, zero biases, deterministic in seed.
  static LiftingNetwork init(const LiftingArchitecture& arch, std::uint64_t seed);

  const LiftingArchitecture& arch() const { return arch_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  const InputNormalization& normalization() const { return norm_; }
  void set_normalization(InputNormalization norm);

  int input_dim() const { return arch_.input_dim; }
  int lift_dim() const { return arch_.lift_dim(); }
  Eigen::Index num_parameters() const;

  // theta: each layer's weight (row-major) followed by its bias, layers in order.
  Vector parameters() const;
  void set_parameters(const Eigen::Ref<const Vector>& theta);

  Vector forward(const Eigen::Ref<const Vector>& x) const;
  // Columns of xs are samples; returns lift_dim() x xs.cols().
  Matrix forward_batch(const Eigen::Ref<const Matrix>& xs) const;

  // Gradient wrt theta of sum_j <upstream.col(j), g(xs.col(j))>.
  // Rows of upstream belonging to appended raw state carry no theta gradient.
  Vector backward(const Eigen::Ref<const Matrix>& xs,
                  const Eigen::Ref<const Matrix>& upstream) const;

  bool operator==(const LiftingNetwork& other) const;

 private:
  Matrix normalized(const Eigen::Ref<const Matrix>& xs) const;

  LiftingArchitecture arch_;
  std::vector<DenseLayer> layers_;
  InputNormalization norm_;
};

// Counts lifting-network evaluations (one per lifted state). Shared by the
// rollout code paths that must prove how often they call the network.
struct LiftCounter {
  std::atomic<std::uint64_t> evaluations{0};

  void add(std::uint64_t n) { evaluations.fetch_add(n, std::memory_order_relaxed); }
  std::uint64_t value() const { return evaluations.load(std::memory_order_relaxed); }
  void reset() { evaluations.store(0, std::memory_order_relaxed); }
};

// Free-function spellings of the network operations.
LiftingNetwork lift_init(const LiftingArchitecture& arch, std::uint64_t seed);
Matrix lift_forward(const LiftingNetwork& net, const Eigen::Ref<const Matrix>& xs);
Vector lift_backward(const LiftingNetwork& net, const Eigen::Ref<const Matrix>& xs,
                     const Eigen::Ref<const Matrix>& upstream);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Vector first_moment;
  Vector second_moment;
  std::uint64_t step = 0;

  static AdamState zeros(Eigen::Index num_parameters, AdamConfig config = {});
};

// One bias-corrected Adam update of theta in place. Throws TrainingError on a
// non-finite gradient, leaving theta and state untouched.
void adam_step(AdamState& state, Vector& theta, const Eigen::Ref<const Vector>& grad);

// Upper bound on the Lipschitz constant of the network part (product of the
// layer weight Frobenius norms times the input scale).
double lipschitz_upper_bound(const LiftingNetwork& net);

}  // namespace mppidk

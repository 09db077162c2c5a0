#include "mppidk/lifting.hpp"

#include <cmath>
#include <string>

#include "mppidk/errors.hpp"

namespace mppidk {

void LiftingArchitecture::validate() const {
  if (input_dim <= 0) throw InvalidInput("lifting: input_dim must be positive");
  if (net_output_dim < 0) throw InvalidInput("lifting: net_output_dim must be nonnegative");
  if (net_output_dim == 0 && !append_state) {
    throw InvalidInput("lifting: empty lifting (no network output and no raw state)");
  }
  if (net_output_dim > 0 && hidden_sizes.empty()) {
    throw InvalidInput("lifting: hidden_sizes must be nonempty");
  }
  for (int h : hidden_sizes) {
    if (h <= 0) throw InvalidInput("lifting: hidden layer sizes must be positive");
  }
  if (lift_dim() < input_dim) {
    throw InvalidInput("lifting: lift dimension " + std::to_string(lift_dim()) +
                       " is smaller than the state dimension " + std::to_string(input_dim));
  }
}

LiftingArchitecture LiftingArchitecture::mlp(int input_dim, std::vector<int> hidden,
                                             int lift_dim) {
  LiftingArchitecture arch;
  arch.input_dim = input_dim;
  arch.hidden_sizes = std::move(hidden);
  arch.net_output_dim = lift_dim;
  return arch;
}

LiftingArchitecture LiftingArchitecture::identity(int input_dim) {
  LiftingArchitecture arch;
  arch.input_dim = input_dim;
  arch.append_state = true;
  return arch;
}

LiftingNetwork::LiftingNetwork(LiftingArchitecture arch, std::vector<DenseLayer> layers,
                               InputNormalization norm)
    : arch_(std::move(arch)), layers_(std::move(layers)) {
  arch_.validate();
  const std::size_t expected = arch_.has_network() ? arch_.hidden_sizes.size() + 1 : 0;
  if (layers_.size() != expected) throw InvalidInput("lifting: wrong number of layers");
  int fan_in = arch_.input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const int fan_out =
        l < arch_.hidden_sizes.size() ? arch_.hidden_sizes[l] : arch_.net_output_dim;
    const DenseLayer& layer = layers_[l];
    if (layer.weight.rows() != fan_out || layer.weight.cols() != fan_in ||
        layer.bias.size() != fan_out) {
      throw InvalidInput("lifting: layer " + std::to_string(l) + " has inconsistent shape");
    }
    numerics::require_finite(layer.weight, "lifting weight");
    numerics::require_finite(layer.bias, "lifting bias");
    fan_in = fan_out;
  }
  set_normalization(std::move(norm));
}

void LiftingNetwork::set_normalization(InputNormalization norm) {
  if (norm.offset.size() == 0 && norm.scale.size() == 0) {
    norm.offset = Vector::Zero(arch_.input_dim);
    norm.scale = Vector::Ones(arch_.input_dim);
  }
  if (norm.offset.size() != arch_.input_dim || norm.scale.size() != arch_.input_dim) {
    throw InvalidInput("lifting: normalization has wrong dimension");
  }
  numerics::require_finite(norm.offset, "normalization offset");
  numerics::require_finite(norm.scale, "normalization scale");
  norm_ = std::move(norm);
}

LiftingNetwork LiftingNetwork::init(const LiftingArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  std::vector<DenseLayer> layers;
  if (arch.has_network()) {
    int fan_in = arch.input_dim;
    std::vector<int> outs = arch.hidden_sizes;
    outs.push_back(arch.net_output_dim);
    for (std::size_t l = 0; l < outs.size(); ++l) {
      const int fan_out = outs[l];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      const std::uint64_t stream = numerics::stream_id({seed, 0x11F7ULL, l});
      DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
      std::uint64_t counter = 0;
      for (int i = 0; i < fan_out; ++i) {
        for (int j = 0; j < fan_in; ++j) {
          const double u = numerics::counter_uniform(stream, counter++);
          layer.weight(i, j) = bound * (2.0 * u - 1.0);
        }
      }
      layers.push_back(std::move(layer));
      fan_in = fan_out;
    }
  }
  return LiftingNetwork(arch, std::move(layers), {});
}

Eigen::Index LiftingNetwork::num_parameters() const {
  Eigen::Index count = 0;
  for (const auto& layer : layers_) count += layer.weight.size() + layer.bias.size();
  return count;
}

Vector LiftingNetwork::parameters() const {
  Vector theta(num_parameters());
  Eigen::Index offset = 0;
  for (const auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      theta.segment(offset, layer.weight.cols()) = layer.weight.row(i).transpose();
      offset += layer.weight.cols();
    }
    theta.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return theta;
}

void LiftingNetwork::set_parameters(const Eigen::Ref<const Vector>& theta) {
  if (theta.size() != num_parameters()) {
    throw InvalidInput("lifting: parameter vector has wrong length");
  }
  numerics::require_finite(theta, "lifting parameters");
  Eigen::Index offset = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
      layer.weight.row(i) = theta.segment(offset, layer.weight.cols()).transpose();
      offset += layer.weight.cols();
    }
    layer.bias = theta.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
}

Matrix LiftingNetwork::normalized(const Eigen::Ref<const Matrix>& xs) const {
  return ((xs.colwise() - norm_.offset).array().colwise() * norm_.scale.array()).matrix();
}

Vector LiftingNetwork::forward(const Eigen::Ref<const Vector>& x) const {
  return forward_batch(x);
}

Matrix LiftingNetwork::forward_batch(const Eigen::Ref<const Matrix>& xs) const {
  if (xs.rows() != arch_.input_dim) {
    throw InvalidInput("lifting: input has dimension " + std::to_string(xs.rows()) +
                       ", expected " + std::to_string(arch_.input_dim));
  }
  const Eigen::Index batch = xs.cols();
  Matrix out(arch_.lift_dim(), batch);
  if (arch_.append_state) out.topRows(arch_.input_dim) = xs;
  if (arch_.append_constant) out.bottomRows(1).setOnes();
  if (!arch_.has_network()) return out;

  Matrix act = normalized(xs);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix pre = layers_[l].weight * act;
    pre.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) {
      act = pre.cwiseMax(0.0);
    } else {
      act = pre.unaryExpr([](double v) { return std::tanh(v); });
    }
  }
  out.middleRows(arch_.state_rows(), arch_.net_output_dim) = act;
  return out;
}

Vector LiftingNetwork::backward(const Eigen::Ref<const Matrix>& xs,
                                const Eigen::Ref<const Matrix>& upstream) const {
  if (xs.rows() != arch_.input_dim) throw InvalidInput("lifting backward: input dimension mismatch");
  if (upstream.rows() != arch_.lift_dim() || upstream.cols() != xs.cols()) {
    throw InvalidInput("lifting backward: upstream gradient shape mismatch");
  }
  Vector grad = Vector::Zero(num_parameters());
  if (!arch_.has_network() || xs.cols() == 0) return grad;

  // Forward pass keeping every layer input and hidden pre-activation.
  const std::size_t num_layers = layers_.size();
  std::vector<Matrix> inputs(num_layers);
  std::vector<Matrix> pre(num_layers);
  inputs[0] = normalized(xs);
  for (std::size_t l = 0; l < num_layers; ++l) {
    pre[l] = layers_[l].weight * inputs[l];
    pre[l].colwise() += layers_[l].bias;
    if (l + 1 < num_layers) inputs[l + 1] = pre[l].cwiseMax(0.0);
  }

  const Matrix out = pre.back().unaryExpr([](double v) { return std::tanh(v); });
  Matrix delta = (upstream.middleRows(arch_.state_rows(), arch_.net_output_dim).array() *
                  (1.0 - out.array().square()))
                     .matrix();

  // Per-layer gradient blocks, filled back to front, then flattened in order.
  std::vector<Matrix> dw(num_layers);
  std::vector<Vector> db(num_layers);
  for (std::size_t l = num_layers; l-- > 0;) {
    dw[l] = delta * inputs[l].transpose();
    db[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = layers_[l].weight.transpose() * delta;
      delta = (back.array() * (pre[l - 1].array() > 0.0).cast<double>()).matrix();
    }
  }

  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < num_layers; ++l) {
    for (Eigen::Index i = 0; i < dw[l].rows(); ++i) {
      grad.segment(offset, dw[l].cols()) = dw[l].row(i).transpose();
      offset += dw[l].cols();
    }
    grad.segment(offset, db[l].size()) = db[l];
    offset += db[l].size();
  }
  return grad;
}

bool LiftingNetwork::operator==(const LiftingNetwork& other) const {
  if (!(arch_ == other.arch_) || layers_.size() != other.layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight != other.layers_[l].weight ||
        layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return norm_.offset == other.norm_.offset && norm_.scale == other.norm_.scale;
}

LiftingNetwork lift_init(const LiftingArchitecture& arch, std::uint64_t seed) {
  return LiftingNetwork::init(arch, seed);
}

Matrix lift_forward(const LiftingNetwork& net, const Eigen::Ref<const Matrix>& xs) {
  return net.forward_batch(xs);
}

Vector lift_backward(const LiftingNetwork& net, const Eigen::Ref<const Matrix>& xs,
                     const Eigen::Ref<const Matrix>& upstream) {
  return net.backward(xs, upstream);
}

AdamState AdamState::zeros(Eigen::Index num_parameters, AdamConfig config) {
  AdamState state;
  state.config = config;
  state.first_moment = Vector::Zero(num_parameters);
  state.second_moment = Vector::Zero(num_parameters);
  return state;
}

void adam_step(AdamState& state, Vector& theta, const Eigen::Ref<const Vector>& grad) {
  if (grad.size() != theta.size() || state.first_moment.size() != theta.size() ||
      state.second_moment.size() != theta.size()) {
    throw InvalidInput("adam: gradient, parameters and moments must have equal length");
  }
  if (!grad.allFinite()) {
    throw TrainingError("adam: non-finite gradient");
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  state.first_moment = c.beta1 * state.first_moment + (1.0 - c.beta1) * grad;
  state.second_moment =
      c.beta2 * state.second_moment + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  theta.array() -= c.learning_rate * (state.first_moment.array() / correction1) /
                   ((state.second_moment.array() / correction2).sqrt() + c.epsilon);
}

double lipschitz_upper_bound(const LiftingNetwork& net) {
  double bound = net.normalization().scale.cwiseAbs().maxCoeff();
  for (const auto& layer : net.layers()) bound *= layer.weight.norm();
  return bound;
}

}  // namespace mppidk

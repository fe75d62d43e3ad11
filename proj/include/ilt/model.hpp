#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ilt {

/// Row-major so that each row is one instance of a batch.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { Relu, Tanh, Identity };

Activation parse_activation(const std::string& name);
std::string to_string(Activation activation);

struct LayerDims {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::vector<std::size_t> head_dims;

  /// Throws ShapeError when a dimension is zero or the head count is not
  /// `num_tasks`.
  void validate(std::size_t num_tasks) const;
};

/// Fully connected layer, weight is out x in, bias is 1 x out.
struct Linear {
  Matrix weight;
  Matrix bias;
  Matrix grad_weight;
  Matrix grad_bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out);
};

/// Non-owning view of one parameter tensor and its gradient buffer.
struct ParamRef {
  std::string name;
  Matrix* value;
  Matrix* grad;
};

/// Activations recorded by forward and consumed by backward.
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre_activations;
  std::vector<Matrix> activations;

  bool empty() const { return activations.empty() && input.size() == 0; }
};

struct ForwardResult {
  std::vector<Matrix> outputs;
  ForwardCache cache;
};

/// Shared-trunk MLP: hidden layers with a fixed nonlinearity, then one
/// linear head per task reading the last hidden representation.
class SharedTrunkModel {
public:
  SharedTrunkModel(LayerDims dims, Activation activation);

  /// Glorot-uniform weights, zero biases.
  void init(std::uint64_t seed);

  ForwardResult forward(const Matrix& inputs) const;

  /// Outputs only, no cache.
  std::vector<Matrix> predict(const Matrix& inputs) const;

  /// Accumulates dL/dtheta into the gradient buffers given dL/d(output) for
  /// every head.
  void backward(const ForwardCache& cache, std::span<const Matrix> output_grads);

  void zero_grads();

  std::vector<ParamRef> params();
  std::size_t num_params() const;

  const LayerDims& dims() const { return dims_; }
  Activation activation() const { return activation_; }
  std::size_t num_tasks() const { return heads_.size(); }

  std::vector<Linear>& trunk() { return trunk_; }
  std::vector<Linear>& heads() { return heads_; }
  const std::vector<Linear>& trunk() const { return trunk_; }
  const std::vector<Linear>& heads() const { return heads_; }

private:
  LayerDims dims_;
  Activation activation_;
  std::vector<Linear> trunk_;
  std::vector<Linear> heads_;
};

enum class OptimizerKind { Sgd, Momentum, Adam };

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

/// Update rules over the model parameters:
///   sgd:      theta <- theta - lr * g
///   momentum: v <- momentum * v + g;  theta <- theta - lr * v
///   adam:     bias-corrected first/second moments with beta1 = momentum.
class Optimizer {
public:
  Optimizer(OptimizerKind kind, double lr, double momentum, double beta2 = 0.999,
            double epsilon = 1e-8);

  /// Throws NumericalError naming the first tensor with a non-finite gradient;
  /// nothing is updated in that case. Gradient buffers are left untouched.
  void step(std::span<const ParamRef> params);

  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }
  void set_lr(double lr);
  double momentum() const { return momentum_; }

private:
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  double beta2_;
  double epsilon_;
  long steps_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace ilt

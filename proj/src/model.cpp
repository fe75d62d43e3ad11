#include "ilt/model.hpp"

#include <cmath>

#include "ilt/errors.hpp"
#include "ilt/rng.hpp"

namespace ilt {

namespace {

Matrix activate(const Matrix& pre, Activation activation) {
  switch (activation) {
    case Activation::Relu:
      return pre.cwiseMax(0.0);
    case Activation::Tanh:
      return pre.array().tanh().matrix();
    case Activation::Identity:
      return pre;
  }
  return pre;
}

// d(activation)/d(pre), elementwise.
Matrix activation_slope(const Matrix& pre, const Matrix& post, Activation activation) {
  switch (activation) {
    case Activation::Relu:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh:
      return (1.0 - post.array().square()).matrix();
    case Activation::Identity:
      return Matrix::Ones(pre.rows(), pre.cols());
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "' (expected relu, tanh or identity)");
}

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Identity:
      return "identity";
  }
  return "?";
}

void LayerDims::validate(std::size_t num_tasks) const {
  if (input_dim == 0) {
    throw ShapeError("input_dim must be >= 1");
  }
  for (const auto h : hidden_dims) {
    if (h == 0) throw ShapeError("hidden dimensions must be >= 1");
  }
  if (head_dims.size() != num_tasks) {
    throw ShapeError("expected " + std::to_string(num_tasks) + " heads, got " +
                     std::to_string(head_dims.size()));
  }
  for (const auto h : head_dims) {
    if (h == 0) throw ShapeError("head dimensions must be >= 1");
  }
}

Linear::Linear(std::size_t in, std::size_t out)
    : weight(Matrix::Zero(out, in)),
      bias(Matrix::Zero(1, out)),
      grad_weight(Matrix::Zero(out, in)),
      grad_bias(Matrix::Zero(1, out)) {}

SharedTrunkModel::SharedTrunkModel(LayerDims dims, Activation activation)
    : dims_(std::move(dims)), activation_(activation) {
  if (dims_.head_dims.empty()) {
    throw ShapeError("model needs at least one task head");
  }
  dims_.validate(dims_.head_dims.size());
  std::size_t in = dims_.input_dim;
  for (const auto h : dims_.hidden_dims) {
    trunk_.emplace_back(in, h);
    in = h;
  }
  for (const auto out : dims_.head_dims) {
    heads_.emplace_back(in, out);
  }
}

void SharedTrunkModel::init(std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&rng](Linear& layer) {
    const auto fan_out = static_cast<double>(layer.weight.rows());
    const auto fan_in = static_cast<double>(layer.weight.cols());
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = rng.uniform(-a, a);
      }
    }
    layer.bias.setZero();
  };
  for (auto& layer : trunk_) fill(layer);
  for (auto& layer : heads_) fill(layer);
  zero_grads();
}

ForwardResult SharedTrunkModel::forward(const Matrix& inputs) const {
  if (inputs.cols() != static_cast<Eigen::Index>(dims_.input_dim)) {
    throw ShapeError("forward: inputs are " + shape_of(inputs) + ", expected " +
                     std::to_string(dims_.input_dim) + " columns");
  }
  ForwardResult result;
  result.cache.input = inputs;
  const Matrix* h = &result.cache.input;
  for (const auto& layer : trunk_) {
    Matrix pre = (*h) * layer.weight.transpose();
    pre.rowwise() += layer.bias.row(0);
    result.cache.activations.push_back(activate(pre, activation_));
    result.cache.pre_activations.push_back(std::move(pre));
    h = &result.cache.activations.back();
  }
  for (const auto& head : heads_) {
    Matrix out = (*h) * head.weight.transpose();
    out.rowwise() += head.bias.row(0);
    result.outputs.push_back(std::move(out));
  }
  return result;
}

std::vector<Matrix> SharedTrunkModel::predict(const Matrix& inputs) const {
  return forward(inputs).outputs;
}

void SharedTrunkModel::backward(const ForwardCache& cache, std::span<const Matrix> output_grads) {
  if (cache.empty() || cache.activations.size() != trunk_.size()) {
    throw std::logic_error("backward: no forward cache for this model");
  }
  if (output_grads.size() != heads_.size()) {
    throw ShapeError("backward: expected " + std::to_string(heads_.size()) +
                     " output gradients, got " + std::to_string(output_grads.size()));
  }
  const Matrix& last = trunk_.empty() ? cache.input : cache.activations.back();
  const Eigen::Index batch = last.rows();

  Matrix d_hidden = Matrix::Zero(batch, last.cols());
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const Matrix& g = output_grads[k];
    auto& head = heads_[k];
    if (g.rows() != batch || g.cols() != head.weight.rows()) {
      throw ShapeError("backward: output gradient for head " + std::to_string(k) + " is " +
                       shape_of(g) + ", expected " + std::to_string(batch) + "x" +
                       std::to_string(head.weight.rows()));
    }
    head.grad_weight.noalias() += g.transpose() * last;
    head.grad_bias += g.colwise().sum();
    d_hidden.noalias() += g * head.weight;
  }

  for (std::size_t l = trunk_.size(); l-- > 0;) {
    auto& layer = trunk_[l];
    const Matrix d_pre =
        d_hidden.cwiseProduct(activation_slope(cache.pre_activations[l], cache.activations[l], activation_));
    const Matrix& below = l == 0 ? cache.input : cache.activations[l - 1];
    layer.grad_weight.noalias() += d_pre.transpose() * below;
    layer.grad_bias += d_pre.colwise().sum();
    if (l > 0) {
      d_hidden = d_pre * layer.weight;
    }
  }
}

void SharedTrunkModel::zero_grads() {
  for (auto* layers : {&trunk_, &heads_}) {
    for (auto& layer : *layers) {
      layer.grad_weight.setZero();
      layer.grad_bias.setZero();
    }
  }
}

std::vector<ParamRef> SharedTrunkModel::params() {
  std::vector<ParamRef> refs;
  for (std::size_t l = 0; l < trunk_.size(); ++l) {
    const auto prefix = "trunk." + std::to_string(l);
    refs.push_back({prefix + ".weight", &trunk_[l].weight, &trunk_[l].grad_weight});
    refs.push_back({prefix + ".bias", &trunk_[l].bias, &trunk_[l].grad_bias});
  }
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const auto prefix = "head." + std::to_string(k);
    refs.push_back({prefix + ".weight", &heads_[k].weight, &heads_[k].grad_weight});
    refs.push_back({prefix + ".bias", &heads_[k].bias, &heads_[k].grad_bias});
  }
  return refs;
}

std::size_t SharedTrunkModel::num_params() const {
  std::size_t n = 0;
  for (const auto* layers : {&trunk_, &heads_}) {
    for (const auto& layer : *layers) {
      n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
  }
  return n;
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd, momentum or adam)");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd:
      return "sgd";
    case OptimizerKind::Momentum:
      return "momentum";
    case OptimizerKind::Adam:
      return "adam";
  }
  return "sgd";
}

Optimizer::Optimizer(OptimizerKind kind, double lr, double momentum, double beta2, double epsilon)
    : kind_(kind), lr_(lr), momentum_(momentum), beta2_(beta2), epsilon_(epsilon) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("optimizer lr must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("optimizer momentum must be in [0, 1)");
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer beta2 must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("optimizer epsilon must be > 0");
  }
}

void Optimizer::set_lr(double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("optimizer lr must be finite and >= 0");
  }
  lr_ = lr;
}

void Optimizer::step(std::span<const ParamRef> params) {
  for (const auto& p : params) {
    if (!p.grad->allFinite()) {
      throw NumericalError("non-finite gradient in " + p.name);
    }
  }
  if (first_.size() != params.size()) {
    first_.clear();
    second_.clear();
    for (const auto& p : params) {
      first_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      if (kind_ == OptimizerKind::Adam) {
        second_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      }
    }
  }
  ++steps_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    const Matrix& g = *p.grad;
    switch (kind_) {
      case OptimizerKind::Sgd:
        *p.value -= lr_ * g;
        break;
      case OptimizerKind::Momentum:
        first_[i] = momentum_ * first_[i] + g;
        *p.value -= lr_ * first_[i];
        break;
      case OptimizerKind::Adam: {
        first_[i] = momentum_ * first_[i] + (1.0 - momentum_) * g;
        second_[i] = beta2_ * second_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(momentum_, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
        const Matrix denom = ((second_[i].array() / c2).sqrt() + epsilon_).matrix();
        *p.value -= (lr_ / c1) * first_[i].cwiseQuotient(denom);
        break;
      }
    }
  }
}

}  // namespace ilt

#include "ilt/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ilt/errors.hpp"

namespace ilt {

namespace {

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string("non-finite ") + what);
  }
}

void check_weighted_inputs(double raw, double s) {
  require_finite(raw, "raw loss");
  require_finite(s, "log variance");
  if (raw < 0.0) {
    throw std::invalid_argument("raw loss must be >= 0");
  }
}

}  // namespace

TaskKind parse_task_kind(const std::string& name) {
  if (name == "regression") return TaskKind::Regression;
  if (name == "classification") return TaskKind::Classification;
  throw ConfigError("unknown task kind '" + name + "'");
}

std::string to_string(TaskKind kind) {
  return kind == TaskKind::Regression ? "regression" : "classification";
}

double reg_raw(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("reg_raw: prediction has " + std::to_string(pred.size()) +
                     " entries, target has " + std::to_string(target.size()));
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    const double d = pred[j] - target[j];
    sum += d * d;
  }
  return sum;
}

std::vector<double> reg_raw_grad(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("reg_raw_grad: length mismatch");
  }
  std::vector<double> g(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j) {
    g[j] = 2.0 * (pred[j] - target[j]);
  }
  return g;
}

double cls_raw(std::span<const double> logits, std::size_t target_class) {
  if (logits.empty()) {
    throw ShapeError("cls_raw: empty logits");
  }
  if (target_class >= logits.size()) {
    throw ShapeError("cls_raw: class " + std::to_string(target_class) + " out of range for " +
                     std::to_string(logits.size()) + " logits");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (const double z : logits) {
    sum += std::exp(z - top);
  }
  // Clamp the rounding residue of log-sum-exp so raw stays non-negative.
  return std::max(0.0, std::log(sum) - (logits[target_class] - top));
}

std::vector<double> cls_raw_grad(std::span<const double> logits, std::size_t target_class) {
  if (logits.empty() || target_class >= logits.size()) {
    throw ShapeError("cls_raw_grad: bad logits/class");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - top);
    sum += p[j];
  }
  for (auto& v : p) {
    v /= sum;
  }
  p[target_class] -= 1.0;
  return p;
}

double weighted_loss(double raw, double s, TaskKind kind) {
  check_weighted_inputs(raw, s);
  return loss_coefficient(kind) * raw * std::exp(-s) + s;
}

InstanceLoss make_instance_loss(double raw, double s, TaskKind kind) {
  return {raw, weighted_loss(raw, s, kind), s};
}

double weighted_loss_ds(double raw, double s, TaskKind kind) {
  check_weighted_inputs(raw, s);
  return 1.0 - loss_coefficient(kind) * raw * std::exp(-s);
}

WeightedLossGrads weighted_loss_grads(double raw, std::span<const double> d_raw_d_pred, double s,
                                      TaskKind kind) {
  check_weighted_inputs(raw, s);
  const double w = loss_coefficient(kind) * std::exp(-s);
  WeightedLossGrads out{std::vector<double>(d_raw_d_pred.size()), 1.0 - w * raw};
  for (std::size_t j = 0; j < d_raw_d_pred.size(); ++j) {
    out.d_pred[j] = w * d_raw_d_pred[j];
  }
  return out;
}

double multitask_total(const Eigen::MatrixXd& weighted) {
  if (weighted.rows() == 0 || weighted.cols() == 0) {
    throw ShapeError("multitask_total: empty loss table");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < weighted.rows(); ++i) {
    total += weighted.row(i).sum();
  }
  return total / static_cast<double>(weighted.rows());
}

}  // namespace ilt

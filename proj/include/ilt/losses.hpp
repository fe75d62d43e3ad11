#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ilt {

enum class TaskKind { Regression, Classification };

TaskKind parse_task_kind(const std::string& name);
std::string to_string(TaskKind kind);

/// Coefficient on raw * exp(-s) in the uncertainty-weighted loss:
/// 0.5 for regression (Gaussian NLL), 1 for classification.
constexpr double loss_coefficient(TaskKind kind) {
  return kind == TaskKind::Regression ? 0.5 : 1.0;
}

struct InstanceLoss {
  double raw;       // >= 0
  double weighted;  // c * raw * exp(-s) + s
  double s;         // log variance
};

/// ||pred - target||^2.
double reg_raw(std::span<const double> pred, std::span<const double> target);

/// d reg_raw / d pred = 2 (pred - target).
std::vector<double> reg_raw_grad(std::span<const double> pred, std::span<const double> target);

/// Cross-entropy -log softmax(logits)[target_class], max-shifted.
double cls_raw(std::span<const double> logits, std::size_t target_class);

/// d cls_raw / d logits = softmax(logits) - onehot(target_class).
std::vector<double> cls_raw_grad(std::span<const double> logits, std::size_t target_class);

/// c * raw * exp(-s) + s.
double weighted_loss(double raw, double s, TaskKind kind);

InstanceLoss make_instance_loss(double raw, double s, TaskKind kind);

struct WeightedLossGrads {
  std::vector<double> d_pred;
  double d_s;
};

/// Gradients of weighted_loss with respect to the prediction (through
/// d_raw_d_pred) and to s:
///   d/d_pred = c * exp(-s) * d_raw_d_pred
///   d/d_s    = 1 - c * raw * exp(-s)
WeightedLossGrads weighted_loss_grads(double raw, std::span<const double> d_raw_d_pred, double s,
                                      TaskKind kind);

/// d weighted_loss / d s alone.
double weighted_loss_ds(double raw, double s, TaskKind kind);

/// Mean over the batch (rows) of the sum over tasks (columns).
double multitask_total(const Eigen::MatrixXd& weighted);

}  // namespace ilt

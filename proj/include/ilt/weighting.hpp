#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ilt/log_var_table.hpp"
#include "ilt/losses.hpp"

namespace ilt {

enum class Scheme { Equal, Mtu, Dwa, Gls, Ilt };

Scheme parse_scheme(const std::string& name);
std::string to_string(Scheme scheme);

// ---------------------------------------------------------------------------
// Equal weighting

std::vector<double> equal_weights(std::size_t num_tasks);

// ---------------------------------------------------------------------------
// MultiTask Uncertainty: one shared log variance s_k per task.

struct MtuState {
  std::vector<double> s;
  std::vector<double> velocity;
  double lr = 0.01;
  double momentum = 0.9;
  double clamp_lo = -4.0;
  double clamp_hi = 4.0;

  MtuState(std::size_t num_tasks, double lr, double momentum, double clamp_lo = -4.0,
           double clamp_hi = 4.0);

  /// Same update rule as the instance table: v <- mu v + g, s <- clamp(s - lr v).
  void step(std::span<const double> grads);
};

struct MtuResult {
  double total;
  std::vector<double> d_s;
};

/// total = sum_k c_k raw_k exp(-s_k) + s_k over batch-mean raw losses.
MtuResult mtu_weighted_total(std::span<const double> raw_means, std::span<const TaskKind> kinds,
                             const MtuState& state);

// ---------------------------------------------------------------------------
// Dynamic Weight Averaging

struct DwaState {
  double temperature = 2.0;
  std::vector<double> scales;
  /// Scaled epoch-mean losses of the last two completed epochs, oldest first.
  std::vector<std::vector<double>> history;

  DwaState(std::size_t num_tasks, double temperature, std::vector<double> scales = {});

  std::size_t num_tasks() const { return scales.size(); }

  /// Appends one epoch of mean raw losses, multiplied by the scale factors.
  void record_epoch(std::span<const double> raw_means);
};

/// lambda_k = K softmax(w / T)_k with w_k = L_k(t-1) / L_k(t-2), or w_k = 1 for
/// the first two epochs. A zero loss at t-2 makes that ratio 1 and logs a
/// warning.
std::vector<double> dwa_weights(const DwaState& state, int epoch);

// ---------------------------------------------------------------------------
// Geometric Loss Strategy

constexpr double kGlsLossFloor = 1e-12;

struct GlsResult {
  double total;
  /// d total / d L_k = total / (K L_k).
  std::vector<double> factors;
};

/// Geometric mean of strictly positive per-task losses.
GlsResult gls_total(std::span<const double> losses);

// ---------------------------------------------------------------------------
// Strategy interface driven by the trainer.

struct WeightingConfig {
  Scheme scheme = Scheme::Ilt;
  /// Pre-multipliers for Equal and DWA; empty means 1 for every task.
  std::vector<double> task_scales;
  double ilt_lr = 1.0;
  double ilt_momentum = 0.9;
  double clamp_lo = -4.0;
  double clamp_hi = 4.0;
  /// All rows share one value per task (the MTU special case of the table).
  bool ilt_tied_rows = false;
  double mtu_lr = 0.01;
  double mtu_momentum = 0.9;
  double dwa_temperature = 2.0;
};

struct BatchWeighting {
  double total = 0.0;
  /// d total / d raw_ik for every instance and task of the batch.
  Eigen::MatrixXd multipliers;
};

using Diagnostics = std::vector<std::pair<std::string, double>>;

class Weighter {
public:
  virtual ~Weighter() = default;

  virtual Scheme scheme() const = 0;

  virtual void begin_epoch(int /*epoch*/) {}

  /// raw is batch x K per-instance unweighted losses.
  virtual BatchWeighting weigh(std::span<const std::size_t> instance_ids,
                               const Eigen::MatrixXd& raw) = 0;

  /// Steps the scheme's own parameters after the model update.
  virtual void update(std::span<const std::size_t> /*instance_ids*/,
                      const Eigen::MatrixXd& /*raw*/) {}

  virtual void end_epoch(std::span<const double> /*epoch_mean_raw*/) {}

  /// Per-epoch values written to the metrics file; names are fixed per scheme.
  virtual Diagnostics diagnostics() const = 0;

  virtual const LogVarTable* table() const { return nullptr; }
  virtual LogVarTable* mutable_table() { return nullptr; }
  virtual const MtuState* mtu_state() const { return nullptr; }
};

std::unique_ptr<Weighter> make_weighter(const WeightingConfig& config,
                                        std::vector<TaskKind> kinds, std::size_t num_instances);

}  // namespace ilt

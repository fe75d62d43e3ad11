#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ilt {

/// Immutable copy of the s = log(sigma^2) matrix taken at the end of an epoch.
class TableSnapshot {
public:
  TableSnapshot(Eigen::MatrixXd values, int epoch) : values_(std::move(values)), epoch_(epoch) {}

  const Eigen::MatrixXd& values() const { return values_; }
  int epoch() const { return epoch_; }
  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
  double operator()(std::size_t i, std::size_t k) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  }
  std::vector<double> column(std::size_t k) const;

private:
  Eigen::MatrixXd values_;
  int epoch_;
};

/// Per-instance, per-task log-variance parameters with a sparse
/// SGD-with-momentum optimizer.
///
/// Only rows named in a sparse_step call are touched: their velocity decays
/// and accumulates the new gradient, then s moves against it and is clamped.
/// Velocity is not clamped. Rows absent from the batch keep both s and
/// velocity exactly as they were.
class LogVarTable {
public:
  LogVarTable(std::size_t n, std::size_t k, double lr, double momentum, double clamp_lo = -4.0,
              double clamp_hi = 4.0);

  std::size_t rows() const { return static_cast<std::size_t>(s_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(s_.cols()); }
  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  double clamp_lo() const { return clamp_lo_; }
  double clamp_hi() const { return clamp_hi_; }

  std::vector<double> gather(std::span<const std::size_t> instance_ids, std::size_t task) const;

  void sparse_step(std::span<const std::size_t> instance_ids, std::size_t task,
                   std::span<const double> grads);

  double s(std::size_t i, std::size_t k) const;
  double velocity(std::size_t i, std::size_t k) const;

  /// Direct write, for tests and tied-row setups. Must lie in the clamp range.
  void set(std::size_t i, std::size_t k, double value);

  TableSnapshot snapshot(int epoch = -1) const { return TableSnapshot(s_, epoch); }
  const Eigen::MatrixXd& velocities() const { return velocity_; }

private:
  void check_index(std::size_t i, std::size_t k) const;

  Eigen::MatrixXd s_;
  Eigen::MatrixXd velocity_;
  double lr_;
  double momentum_;
  double clamp_lo_;
  double clamp_hi_;
};

/// Text format: a header line "# N=<n> K=<k> epoch=<e>" followed by one
/// line per instance holding K space-separated values.
void write_snapshot(const TableSnapshot& snapshot, const std::filesystem::path& path);
TableSnapshot read_snapshot(const std::filesystem::path& path);

}  // namespace ilt

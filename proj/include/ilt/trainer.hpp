#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ilt/config.hpp"
#include "ilt/dataset.hpp"
#include "ilt/errors.hpp"
#include "ilt/log_var_table.hpp"
#include "ilt/model.hpp"
#include "ilt/weighting.hpp"

namespace spdlog {
class logger;
}

namespace ilt {

/// Thrown when a run hits a non-finite loss or gradient.
class TrainingAborted : public NumericalError {
public:
  TrainingAborted(int epoch, std::size_t batch, const std::string& what);
  int epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

private:
  int epoch_;
  std::size_t batch_;
};

/// Per-instance raw losses of one batch and their derivatives with respect to
/// each head's outputs.
struct BatchLossEval {
  ForwardResult forward;
  Eigen::MatrixXd raw;          // batch x K
  std::vector<Matrix> d_raw;    // per task, batch x head_dim
};

BatchLossEval evaluate_batch_losses(const SharedTrunkModel& model, const Batch& batch,
                                    const std::vector<TaskSpec>& tasks);

/// Output gradients of the weighted total: row i of task k is
/// multipliers(i, k) * d_raw[k].row(i).
std::vector<Matrix> route_output_grads(const std::vector<Matrix>& d_raw,
                                       const Eigen::MatrixXd& multipliers);

/// Classification: top-1 accuracy. Regression: mean squared error per target
/// component. Uses the model alone.
std::vector<double> evaluate(const SharedTrunkModel& model, const TrainingData& data);

std::string metric_name(const TaskSpec& task, std::size_t k);

struct EpochRecord {
  int run = 0;
  int epoch = 0;
  double lr = 0.0;
  std::vector<double> train_loss;  // epoch mean of raw per-instance losses
  std::vector<double> eval;        // NaN on epochs without evaluation
  Diagnostics diagnostics;
};

struct RunResult {
  int run = 0;
  std::uint64_t run_seed = 0;
  std::vector<EpochRecord> epochs;
  std::optional<SharedTrunkModel> model;
  std::optional<TableSnapshot> detection_snapshot;
  std::optional<TableSnapshot> final_snapshot;
  /// Every snapshot taken (periodic, detection, final), in epoch order.
  std::vector<TableSnapshot> snapshots;
  bool aborted = false;
  std::string abort_reason;

  const std::vector<double>& final_eval() const { return epochs.back().eval; }
};

struct TrainHooks {
  /// Called after every optimizer step (model and scheme parameters).
  std::function<void(int epoch, std::size_t batch, const SharedTrunkModel&, const Weighter&)> on_step;
  /// Called after every epoch record is complete.
  std::function<void(const EpochRecord&, const Weighter&)> on_epoch;
};

/// Generated and corrupted datasets for a config.
struct PreparedData {
  MultiTaskDataset train;
  MultiTaskDataset test;
  /// Corrupted task index, if any.
  std::optional<std::size_t> corrupted_task;
};

PreparedData prepare_data(const RunConfig& config);

/// One run. Throws TrainingAborted on numerical failure.
RunResult train_one(const RunConfig& config, const TrainingData& train, const TrainingData& test,
                    std::uint64_t run_seed, int run_index = 0, const TrainHooks& hooks = {},
                    spdlog::logger* log = nullptr);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> values;
};

struct RepeatedResult {
  RunConfig config;
  std::vector<RunResult> runs;
  /// Keyed by metric name, over completed runs only.
  std::map<std::string, MetricSummary> aggregate;
  bool partial = false;
  std::vector<std::string> failures;
};

/// Runs seeds config.seed .. config.seed + repeats - 1.
RepeatedResult train_repeated(const RunConfig& config, spdlog::logger* log = nullptr);

/// Same, with explicit per-run seeds.
RepeatedResult train_repeated(const RunConfig& config, const PreparedData& data,
                              const std::vector<std::uint64_t>& run_seeds,
                              spdlog::logger* log = nullptr);

/// config.json, metrics.csv, aggregate.json and snapshots/ under `dir`.
void write_run_artifacts(const RepeatedResult& result, const std::filesystem::path& dir);

/// metrics.csv content for a set of runs.
std::string metrics_csv(const RepeatedResult& result);

nlohmann::json aggregate_json(const RepeatedResult& result);

std::filesystem::path snapshot_path(const std::filesystem::path& dir, int run, int epoch);

}  // namespace ilt

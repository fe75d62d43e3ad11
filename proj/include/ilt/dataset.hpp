#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ilt/losses.hpp"
#include "ilt/model.hpp"

namespace ilt {

struct TaskSpec {
  TaskKind kind;
  /// Number of classes for classification, output dimension for regression.
  std::size_t dim;
};

/// Targets of one task; only the member matching the task kind is filled.
struct TaskTargets {
  std::vector<std::size_t> classes;
  Matrix values;
};

struct Batch {
  std::vector<std::size_t> instance_ids;
  Matrix inputs;
  std::vector<TaskTargets> targets;
};

/// Inputs and targets as seen by training. Holds no corruption ground truth.
struct TrainingData {
  std::vector<TaskSpec> tasks;
  Matrix inputs;
  std::vector<TaskTargets> targets;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
  std::size_t num_tasks() const { return tasks.size(); }
  std::vector<TaskKind> kinds() const;
  std::vector<std::size_t> head_dims() const;

  /// Gathers the given rows. Ids must be unique and in range.
  Batch batch(std::span<const std::size_t> instance_ids) const;

  /// Throws ShapeError when targets disagree with the task specs.
  void validate() const;
};

struct GeneratorConfig {
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::size_t input_dim = 8;
  std::size_t classes = 4;
  std::size_t reg_dim = 2;
  std::uint64_t seed = 0;
};

/// Fixed parameters of the synthetic distribution, derived from the seed.
struct SyntheticProblem {
  std::size_t input_dim;
  std::size_t classes;
  std::size_t reg_dim;
  Matrix means;   // classes x input_dim, each row on the sphere of radius 3
  Matrix linear;  // reg_dim x input_dim
  Matrix freq;    // reg_dim x input_dim
};

/// Training data plus the per-task corruption ground truth. The masks are
/// reachable only through this type, which training code never receives.
class MultiTaskDataset {
public:
  explicit MultiTaskDataset(TrainingData data);

  const TrainingData& data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  const std::vector<bool>& corrupted(std::size_t task) const;
  bool corruption_applied(std::size_t task) const;
  std::size_t corrupted_count(std::size_t task) const;

  friend void corrupt_classification(MultiTaskDataset&, std::size_t, double, std::uint64_t);
  friend void corrupt_regression(MultiTaskDataset&, std::size_t, double, std::uint64_t);
  friend MultiTaskDataset read_dataset(const std::filesystem::path&);

private:
  TrainingData data_;
  std::vector<std::vector<bool>> masks_;
  std::vector<bool> applied_;
};

SyntheticProblem make_problem(std::size_t input_dim, std::size_t classes, std::size_t reg_dim,
                              std::uint64_t seed);

/// Task 0 is classification over the mixture component, task 1 regression
/// onto linear x + 0.1 sin(freq x).
MultiTaskDataset sample_dataset(const SyntheticProblem& problem, std::size_t n,
                                std::uint64_t seed);

/// Training split of the problem defined by `seed`.
MultiTaskDataset generate(std::size_t n, std::size_t input_dim, std::size_t classes,
                          std::uint64_t seed, std::size_t reg_dim = 2);

struct DatasetSplits {
  MultiTaskDataset train;
  MultiTaskDataset test;
};

/// Train and test splits drawn from the same problem with independent streams.
DatasetSplits generate_splits(const GeneratorConfig& config);

/// Number of instances selected for a corruption fraction: floor(fraction * n).
std::size_t corruption_count(double fraction, std::size_t n);

/// Relabels floor(fraction * N) seeded instances through one seeded
/// derangement of the class labels. A task can be corrupted only once.
void corrupt_classification(MultiTaskDataset& dataset, std::size_t task, double fraction,
                            std::uint64_t seed);

/// Adds U(min_j, max_j) noise to every component j of floor(fraction * N)
/// seeded instances, min/max taken over the clean targets of the dataset.
void corrupt_regression(MultiTaskDataset& dataset, std::size_t task, double fraction,
                        std::uint64_t seed);

/// Header line "# n=<n> d=<d> K=<k> tasks=<kind>:<dim>,..." followed by one
/// line per instance: id, d inputs, each task's target (class index or dim
/// values), then K corruption flags (0/1).
void write_dataset(const MultiTaskDataset& dataset, const std::filesystem::path& path);
MultiTaskDataset read_dataset(const std::filesystem::path& path);

}  // namespace ilt

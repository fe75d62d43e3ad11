#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilt/dataset.hpp"
#include "ilt/model.hpp"
#include "ilt/weighting.hpp"

namespace ilt {

enum class CorruptionTarget { None, Classification, Regression };

CorruptionTarget parse_corruption_target(const std::string& name);
std::string to_string(CorruptionTarget target);

struct CorruptionConfig {
  CorruptionTarget target = CorruptionTarget::None;
  double fraction = 0.4;
};

struct ModelConfig {
  std::vector<std::size_t> hidden{128, 128};
  Activation activation = Activation::Relu;
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 2.5e-4;
  /// Heavy-ball coefficient, or beta1 for adam.
  double momentum = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// lr is multiplied by decay_factor after every decay_every epochs; 0 disables.
  double decay_factor = 0.1;
  int decay_every = 20;
};

struct TrainConfig {
  int epochs = 60;
  std::size_t batch_size = 4;
  int eval_every = 1;
  int repeats = 3;
  /// Write a table snapshot every this many epochs (0: only the detection and
  /// final snapshots).
  int snapshot_every = 0;
  /// Epoch whose end-of-epoch snapshot feeds detection; -1 picks the last
  /// epoch before the first lr decay.
  int detection_epoch = -1;
};

/// Everything needed to reproduce a run. Data, corruption, initialization
/// and shuffling seeds are all derived from `seed` (see seeds()).
struct RunConfig {
  std::uint64_t seed = 1;
  GeneratorConfig data;
  CorruptionConfig corruption;
  ModelConfig model;
  OptimizerConfig optimizer;
  WeightingConfig weighting;
  TrainConfig train;
  std::string output_dir = "runs/default";

  /// Throws ConfigError naming the first invalid field.
  void validate() const;

  /// Epoch index whose snapshot is used for detection.
  int resolved_detection_epoch() const;
};

/// Seed streams derived from the base seed:
///   data    derive_seed(seed, "data")     problem + train/test samples
///   corrupt derive_seed(seed, "corrupt")  subset and relabeling/noise
///   run r   seed + r, then derive_seed(run, "init") and derive_seed(run, "shuffle")
struct SeedPlan {
  std::uint64_t data;
  std::uint64_t corruption;
};
SeedPlan seeds(std::uint64_t base_seed);
std::uint64_t init_seed(std::uint64_t run_seed);
std::uint64_t shuffle_seed(std::uint64_t run_seed);

nlohmann::json to_json(const RunConfig& config);

/// Missing fields take defaults; unknown fields and type mismatches throw
/// ConfigError naming the field.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace ilt

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ilt/config.hpp"
#include "ilt/detection.hpp"
#include "ilt/trainer.hpp"

namespace ilt {

struct CorruptionLevel {
  CorruptionTarget target = CorruptionTarget::None;
  double fraction = 0.0;
};

struct SweepConfig {
  RunConfig base;
  std::vector<Scheme> schemes;
  std::vector<CorruptionLevel> levels;
  /// Audited fraction for detection; 0 uses the corruption fraction.
  double detection_p = 0.0;
  std::string output_dir = "runs/sweep";
};

/// {"base": <run config>, "schemes": [...], "corruptions": [{"task", "fraction"}],
///  "detection_p": <number>, "output_dir": <string>}
SweepConfig sweep_config_from_json(const nlohmann::json& j);
SweepConfig load_sweep_config(const std::filesystem::path& path);

/// Detection over every completed run of an ILT result, on the corrupted
/// task of `data`. Uses each run's detection snapshot (or final snapshot).
std::vector<DetectionReport> detect_runs(const RepeatedResult& result, const PreparedData& data,
                                         double p, bool use_final_snapshot = false);

struct SweepCell {
  Scheme scheme = Scheme::Equal;
  CorruptionLevel level;
  RunConfig config;
  std::optional<RepeatedResult> result;
  /// Per-run detection accuracies; empty when the scheme has no table.
  std::vector<DetectionReport> detections;
  bool failed = false;
  std::string error;
};

RunConfig cell_config(const SweepConfig& sweep, Scheme scheme, const CorruptionLevel& level);

/// Runs every scheme x corruption cell; a failing cell is recorded and the
/// sweep continues.
std::vector<SweepCell> run_sweep(const SweepConfig& sweep, spdlog::logger* log = nullptr);

/// One row per cell: scheme, corruption, per-task metric mean/std, detection
/// accuracy mean/std (or "undefined" / "n/a"), status.
std::string sweep_csv(const std::vector<SweepCell>& cells);

}  // namespace ilt

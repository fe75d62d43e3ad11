#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilt/log_var_table.hpp"

namespace ilt {

struct RankedInstance {
  std::size_t instance_id;
  double s;
  bool corrupt;
};

struct DetectionReport {
  std::size_t task = 0;
  int epoch = -1;
  double p = 0.0;
  std::size_t top_count = 0;
  std::size_t corrupt_count = 0;
  std::size_t found = 0;
  /// |top ∩ corrupt| / |corrupt|; empty when nothing is corrupt.
  std::optional<double> accuracy;
  /// Sorted by s descending, ties by instance id ascending.
  std::vector<RankedInstance> ranking;
};

/// Ranks instances by their log variance on `task` and counts how many of the
/// known-corrupt ones fall in the top floor(p * N).
DetectionReport detect(const TableSnapshot& snapshot, std::size_t task,
                       const std::vector<bool>& corrupt_mask, double p);

nlohmann::json to_json(const DetectionReport& report);

/// Columns: rank,instance_id,s,corrupt.
std::string ranking_csv(const DetectionReport& report);

struct Trajectories {
  std::size_t task = 0;
  std::vector<int> epochs;
  std::vector<std::size_t> instance_ids;
  /// series[j][e]: s of instance_ids[j] at epochs[e].
  std::vector<std::vector<double>> series;
  /// Dataset-wide median of s per epoch.
  std::vector<double> median;
};

Trajectories export_trajectories(std::span<const TableSnapshot> snapshots,
                                 std::span<const std::size_t> instance_ids, std::size_t task);

/// Columns: epoch,instance_id,s; the median series uses instance_id "median".
std::string trajectories_csv(const Trajectories& trajectories);

}  // namespace ilt

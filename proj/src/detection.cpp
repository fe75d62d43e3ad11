#include "ilt/detection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ilt/dataset.hpp"
#include "ilt/errors.hpp"
#include "ilt/stats.hpp"

namespace ilt {

DetectionReport detect(const TableSnapshot& snapshot, std::size_t task,
                       const std::vector<bool>& corrupt_mask, double p) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw std::invalid_argument("detect: p must be in (0, 1]");
  }
  if (task >= snapshot.cols()) {
    throw std::out_of_range("detect: task " + std::to_string(task) + " out of range");
  }
  const auto n = snapshot.rows();
  if (corrupt_mask.size() != n) {
    throw ShapeError("detect: mask has " + std::to_string(corrupt_mask.size()) +
                     " entries for " + std::to_string(n) + " instances");
  }

  DetectionReport report;
  report.task = task;
  report.epoch = snapshot.epoch();
  report.p = p;
  report.ranking.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    report.ranking.push_back({i, snapshot(i, task), corrupt_mask[i]});
    report.corrupt_count += corrupt_mask[i] ? 1 : 0;
  }
  std::sort(report.ranking.begin(), report.ranking.end(),
            [](const RankedInstance& a, const RankedInstance& b) {
              if (a.s != b.s) return a.s > b.s;
              return a.instance_id < b.instance_id;
            });
  report.top_count = corruption_count(p, n);
  for (std::size_t r = 0; r < report.top_count; ++r) {
    report.found += report.ranking[r].corrupt ? 1 : 0;
  }
  if (report.corrupt_count > 0) {
    report.accuracy =
        static_cast<double>(report.found) / static_cast<double>(report.corrupt_count);
  }
  return report;
}

nlohmann::json to_json(const DetectionReport& report) {
  nlohmann::json j{{"task", report.task},
                   {"epoch", report.epoch},
                   {"p", report.p},
                   {"top_count", report.top_count},
                   {"corrupt_count", report.corrupt_count},
                   {"found", report.found}};
  if (report.accuracy) {
    j["accuracy"] = *report.accuracy;
    j["defined"] = true;
  } else {
    j["accuracy"] = nullptr;
    j["defined"] = false;
  }
  return j;
}

std::string ranking_csv(const DetectionReport& report) {
  std::ostringstream out;
  out << "rank,instance_id,s,corrupt\n";
  char buf[32];
  for (std::size_t r = 0; r < report.ranking.size(); ++r) {
    const auto& e = report.ranking[r];
    std::snprintf(buf, sizeof buf, "%.17g", e.s);
    out << r << ',' << e.instance_id << ',' << buf << ',' << (e.corrupt ? 1 : 0) << '\n';
  }
  return out.str();
}

Trajectories export_trajectories(std::span<const TableSnapshot> snapshots,
                                 std::span<const std::size_t> instance_ids, std::size_t task) {
  if (snapshots.empty()) {
    throw std::invalid_argument("export_trajectories: no snapshots");
  }
  const auto n = snapshots.front().rows();
  const auto k = snapshots.front().cols();
  for (const auto& snap : snapshots) {
    if (snap.rows() != n || snap.cols() != k) {
      throw ShapeError("export_trajectories: snapshots have inconsistent shapes");
    }
  }
  if (task >= k) throw std::out_of_range("export_trajectories: task out of range");
  for (const auto id : instance_ids) {
    if (id >= n) throw std::out_of_range("export_trajectories: instance " + std::to_string(id));
  }
  Trajectories out;
  out.task = task;
  out.instance_ids.assign(instance_ids.begin(), instance_ids.end());
  out.series.resize(instance_ids.size());
  for (const auto& snap : snapshots) {
    out.epochs.push_back(snap.epoch());
    for (std::size_t j = 0; j < instance_ids.size(); ++j) {
      out.series[j].push_back(snap(instance_ids[j], task));
    }
    out.median.push_back(stats::median(snap.column(task)));
  }
  return out;
}

std::string trajectories_csv(const Trajectories& t) {
  std::ostringstream out;
  out << "epoch,instance_id,s\n";
  char buf[32];
  for (std::size_t e = 0; e < t.epochs.size(); ++e) {
    for (std::size_t j = 0; j < t.instance_ids.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", t.series[j][e]);
      out << t.epochs[e] << ',' << t.instance_ids[j] << ',' << buf << '\n';
    }
    std::snprintf(buf, sizeof buf, "%.17g", t.median[e]);
    out << t.epochs[e] << ",median," << buf << '\n';
  }
  return out.str();
}

}  // namespace ilt

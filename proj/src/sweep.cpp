#include "ilt/sweep.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ilt/errors.hpp"
#include "ilt/stats.hpp"

namespace ilt {

using nlohmann::json;

SweepConfig sweep_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "base" && key != "schemes" && key != "corruptions" && key != "detection_p" &&
        key != "output_dir") {
      throw ConfigError("unknown sweep config field '" + key + "'");
    }
  }
  SweepConfig sweep;
  sweep.base = config_from_json(j.value("base", json::object()));
  if (!j.contains("schemes") || !j.at("schemes").is_array() || j.at("schemes").empty()) {
    throw ConfigError("config field 'schemes': expected non-empty array of strings");
  }
  for (const auto& s : j.at("schemes")) {
    if (!s.is_string()) throw ConfigError("config field 'schemes': expected array of strings");
    sweep.schemes.push_back(parse_scheme(s.get<std::string>()));
  }
  if (!j.contains("corruptions") || !j.at("corruptions").is_array() || j.at("corruptions").empty()) {
    throw ConfigError("config field 'corruptions': expected non-empty array of objects");
  }
  for (const auto& c : j.at("corruptions")) {
    if (!c.is_object() || !c.contains("task") || !c.at("task").is_string()) {
      throw ConfigError("config field 'corruptions[].task': expected string");
    }
    CorruptionLevel level{parse_corruption_target(c.at("task").get<std::string>()), 0.0};
    if (level.target != CorruptionTarget::None) {
      if (!c.contains("fraction") || !c.at("fraction").is_number()) {
        throw ConfigError("config field 'corruptions[].fraction': expected number");
      }
      level.fraction = c.at("fraction").get<double>();
      if (!(level.fraction > 0.0 && level.fraction <= 1.0)) {
        throw ConfigError("config field 'corruptions[].fraction' must be in (0, 1]");
      }
    }
    sweep.levels.push_back(level);
  }
  if (j.contains("detection_p")) {
    if (!j.at("detection_p").is_number()) throw ConfigError("config field 'detection_p': expected number");
    sweep.detection_p = j.at("detection_p").get<double>();
    if (!(sweep.detection_p >= 0.0 && sweep.detection_p <= 1.0)) {
      throw ConfigError("config field 'detection_p' must be in [0, 1]");
    }
  }
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ConfigError("config field 'output_dir': expected string");
    sweep.output_dir = j.at("output_dir").get<std::string>();
  }
  return sweep;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path.string());
  try {
    return sweep_config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

std::vector<DetectionReport> detect_runs(const RepeatedResult& result, const PreparedData& data,
                                         double p, bool use_final_snapshot) {
  std::vector<DetectionReport> reports;
  if (!data.corrupted_task) {
    throw std::invalid_argument("detect_runs: the dataset has no corrupted task");
  }
  const auto task = *data.corrupted_task;
  for (const auto& run : result.runs) {
    if (run.aborted) continue;
    const auto& snap = use_final_snapshot ? run.final_snapshot : run.detection_snapshot;
    if (!snap) throw std::invalid_argument("detect_runs: run has no table snapshot (scheme is not ilt)");
    reports.push_back(detect(*snap, task, data.train.corrupted(task), p));
  }
  return reports;
}

RunConfig cell_config(const SweepConfig& sweep, Scheme scheme, const CorruptionLevel& level) {
  RunConfig c = sweep.base;
  c.weighting.scheme = scheme;
  c.corruption.target = level.target;
  if (level.target != CorruptionTarget::None) c.corruption.fraction = level.fraction;
  std::ostringstream name;
  name << to_string(scheme) << '_' << to_string(level.target);
  if (level.target != CorruptionTarget::None) {
    name << '_' << static_cast<int>(std::lround(level.fraction * 100.0));
  }
  c.output_dir = (std::filesystem::path(sweep.output_dir) / name.str()).string();
  return c;
}

std::vector<SweepCell> run_sweep(const SweepConfig& sweep, spdlog::logger* log) {
  std::vector<SweepCell> cells;
  for (const auto& level : sweep.levels) {
    for (const auto scheme : sweep.schemes) {
      SweepCell cell;
      cell.scheme = scheme;
      cell.level = level;
      cell.config = cell_config(sweep, scheme, level);
      try {
        cell.config.validate();
        const auto data = prepare_data(cell.config);
        std::vector<std::uint64_t> run_seeds;
        for (int r = 0; r < cell.config.train.repeats; ++r) {
          run_seeds.push_back(cell.config.seed + static_cast<std::uint64_t>(r));
        }
        cell.result = train_repeated(cell.config, data, run_seeds, log);
        if (cell.result->partial) {
          cell.failed = true;
          cell.error = cell.result->failures.front();
        }
        if (scheme == Scheme::Ilt && data.corrupted_task) {
          const double p = sweep.detection_p > 0.0 ? sweep.detection_p : level.fraction;
          cell.detections = detect_runs(*cell.result, data, p);
        }
      } catch (const std::exception& e) {
        cell.failed = true;
        cell.error = e.what();
        if (log) log->error("sweep cell {} failed: {}", cell.config.output_dir, e.what());
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_escape(const std::string& s) {
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string sweep_csv(const std::vector<SweepCell>& cells) {
  std::ostringstream out;
  out << "scheme,corrupt_task,corrupt_fraction,task0_accuracy_mean,task0_accuracy_std,"
         "task1_mse_mean,task1_mse_std,detection_accuracy_mean,detection_accuracy_std,status\n";
  for (const auto& cell : cells) {
    out << to_string(cell.scheme) << ',' << to_string(cell.level.target) << ','
        << num(cell.level.fraction);
    for (const char* metric : {"task0_accuracy", "task1_mse"}) {
      if (cell.result && cell.result->aggregate.count(metric)) {
        const auto& m = cell.result->aggregate.at(metric);
        out << ',' << num(m.mean) << ',' << num(m.std);
      } else {
        out << ",,";
      }
    }
    if (cell.scheme != Scheme::Ilt) {
      out << ",n/a,n/a";
    } else if (cell.level.target == CorruptionTarget::None) {
      out << ",undefined,undefined";
    } else if (cell.detections.empty()) {
      out << ",,";
    } else {
      std::vector<double> acc;
      for (const auto& d : cell.detections) {
        if (d.accuracy) acc.push_back(*d.accuracy);
      }
      if (acc.empty()) {
        out << ",undefined,undefined";
      } else {
        out << ',' << num(stats::mean(acc)) << ',' << num(stats::stddev(acc));
      }
    }
    out << ',' << (cell.failed ? "failed: " + csv_escape(cell.error) : std::string("ok")) << '\n';
  }
  return out.str();
}

}  // namespace ilt

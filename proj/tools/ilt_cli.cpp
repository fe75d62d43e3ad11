// ilt: train, detect, gradcheck, sweep and gen-data over JSON run configs.
//
// Exit codes: 0 success, 1 usage or config error, 2 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ilt/config.hpp"
#include "ilt/dataset.hpp"
#include "ilt/detection.hpp"
#include "ilt/errors.hpp"
#include "ilt/gradcheck.hpp"
#include "ilt/stats.hpp"
#include "ilt/sweep.hpp"
#include "ilt/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

std::shared_ptr<spdlog::logger> make_logger(const fs::path& dir, int verbosity) {
  auto console = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
  console->set_level(verbosity >= 2 ? spdlog::level::debug
                     : verbosity == 1 ? spdlog::level::info
                                      : spdlog::level::warn);
  std::vector<spdlog::sink_ptr> sinks{console};
  if (!dir.empty()) {
    fs::create_directories(dir);
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>((dir / "run.log").string(), true);
    file->set_level(spdlog::level::info);
    sinks.push_back(file);
  }
  auto logger = std::make_shared<spdlog::logger>("ilt", sinks.begin(), sinks.end());
  logger->set_level(spdlog::level::debug);
  logger->flush_on(spdlog::level::info);
  return logger;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int verbosity = 0;

  std::string run_dir;
  double p = 0.0;
  bool final_snapshot = false;
  std::vector<std::size_t> trajectory_ids;

  int gradcheck_seeds = 3;
  double perturb_cls_ds = 0.0;
};

int cmd_train(const Options& opt) {
  auto config = ilt::load_config(opt.config);
  if (opt.seed) config.seed = *opt.seed;
  if (!opt.out.empty()) config.output_dir = opt.out;
  config.validate();
  const fs::path dir = config.output_dir;
  auto log = make_logger(dir, opt.verbosity);
  log->info("training scheme {} with {} run(s) into {}", ilt::to_string(config.weighting.scheme),
            config.train.repeats, dir.string());
  const auto result = ilt::train_repeated(config, log.get());
  ilt::write_run_artifacts(result, dir);
  for (const auto& [name, m] : result.aggregate) {
    std::cout << name << " mean=" << m.mean << " std=" << m.std << '\n';
  }
  std::cout << "run directory: " << dir.string() << '\n';
  if (result.partial) {
    for (const auto& f : result.failures) std::cerr << "aborted: " << f << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_detect(const Options& opt) {
  const fs::path dir = opt.run_dir;
  const auto config = ilt::load_config(dir / "config.json");
  const auto data = ilt::prepare_data(config);
  if (!data.corrupted_task) {
    std::cerr << "run has no corrupted task; detection accuracy is undefined\n";
  }
  const std::size_t task = data.corrupted_task.value_or(0);
  const double p = opt.p > 0.0 ? opt.p : config.corruption.fraction;
  const int epoch = opt.final_snapshot ? config.train.epochs - 1 : config.resolved_detection_epoch();

  nlohmann::json summary{{"task", task}, {"epoch", epoch}, {"p", p}, {"runs", nlohmann::json::array()}};
  std::vector<double> accuracies;
  for (int r = 0; r < config.train.repeats; ++r) {
    const auto path = ilt::snapshot_path(dir, r, epoch);
    if (!fs::exists(path)) {
      throw ilt::ConfigError("snapshot not found: " + path.string() + " (was the scheme ilt?)");
    }
    const auto snap = ilt::read_snapshot(path);
    const auto report = ilt::detect(snap, task, data.train.corrupted(task), p);
    auto j = ilt::to_json(report);
    j["run"] = r;
    summary["runs"].push_back(j);
    if (report.accuracy) accuracies.push_back(*report.accuracy);
    write_text(dir / ("ranking_run" + std::to_string(r) + ".csv"), ilt::ranking_csv(report));
    std::cout << "run " << r << " detection accuracy: "
              << (report.accuracy ? std::to_string(*report.accuracy) : std::string("undefined")) << '\n';

    if (!opt.trajectory_ids.empty()) {
      std::vector<ilt::TableSnapshot> snaps;
      for (int e = 0; e < config.train.epochs; ++e) {
        const auto sp = ilt::snapshot_path(dir, r, e);
        if (fs::exists(sp)) snaps.push_back(ilt::read_snapshot(sp));
      }
      const auto traj = ilt::export_trajectories(snaps, opt.trajectory_ids, task);
      write_text(dir / ("trajectories_run" + std::to_string(r) + ".csv"), ilt::trajectories_csv(traj));
    }
  }
  if (accuracies.empty()) {
    summary["accuracy_mean"] = nullptr;
    summary["defined"] = false;
  } else {
    summary["accuracy_mean"] = ilt::stats::mean(accuracies);
    summary["accuracy_std"] = ilt::stats::stddev(accuracies);
    summary["defined"] = true;
  }
  write_text(dir / "detection.json", summary.dump(2) + "\n");
  return kExitOk;
}

int cmd_gradcheck(const Options& opt) {
  ilt::GradcheckOptions options;
  options.seeds = opt.gradcheck_seeds;
  options.cls_ds_perturbation = opt.perturb_cls_ds;
  const auto report = ilt::run_gradcheck(options);
  for (const auto& g : report.groups) {
    std::printf("%-24s max_rel_error=%.3e checked=%zu %s\n", g.name.c_str(), g.max_rel_error,
                g.checked, g.pass ? "PASS" : "FAIL");
  }
  if (!report.pass) {
    std::cerr << "failing groups:";
    for (const auto& g : report.groups) {
      if (!g.pass) std::cerr << ' ' << g.name;
    }
    std::cerr << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_sweep(const Options& opt) {
  auto sweep = ilt::load_sweep_config(opt.config);
  if (opt.seed) sweep.base.seed = *opt.seed;
  if (!opt.out.empty()) sweep.output_dir = opt.out;
  const fs::path dir = sweep.output_dir;
  auto log = make_logger(dir, opt.verbosity);
  const auto cells = ilt::run_sweep(sweep, log.get());
  bool any_failed = false;
  for (const auto& cell : cells) {
    if (cell.result) ilt::write_run_artifacts(*cell.result, cell.config.output_dir);
    any_failed |= cell.failed;
  }
  const auto table = ilt::sweep_csv(cells);
  write_text(dir / "sweep.csv", table);
  std::cout << table;
  return any_failed ? kExitNumerical : kExitOk;
}

int cmd_gen_data(const Options& opt) {
  auto config = ilt::load_config(opt.config);
  if (opt.seed) config.seed = *opt.seed;
  const fs::path dir = opt.out.empty() ? fs::path(config.output_dir) : fs::path(opt.out);
  fs::create_directories(dir);
  const auto data = ilt::prepare_data(config);
  ilt::write_dataset(data.train, dir / "train.txt");
  ilt::write_dataset(data.test, dir / "test.txt");
  std::cout << "wrote " << (dir / "train.txt").string() << " and " << (dir / "test.txt").string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance-level task parameters for multi-task loss weighting"};
  app.require_subcommand(0, 1);
  Options opt;
  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "Print the default run config as JSON");

  auto* train = app.add_subcommand("train", "Train repeated runs from a config");
  train->add_option("-c,--config", opt.config, "Run config (JSON)")->required();
  train->add_option("-o,--out", opt.out, "Output directory (overrides output_dir)");
  train->add_option("--seed", opt.seed, "Base seed override");
  train->add_flag("-v,--verbose", opt.verbosity, "Increase console verbosity");

  auto* detect = app.add_subcommand("detect", "Rank instances of a finished run by log variance");
  detect->add_option("-r,--run-dir", opt.run_dir, "Run directory written by train")->required();
  detect->add_option("-p,--p", opt.p, "Audited fraction (default: corruption fraction)");
  detect->add_flag("--final", opt.final_snapshot, "Use the final snapshot instead of the pre-decay one");
  detect->add_option("--trajectory-ids", opt.trajectory_ids, "Instance ids to export trajectories for")
      ->delimiter(',');

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  gradcheck->add_option("--seeds", opt.gradcheck_seeds, "Number of random seeds")->check(CLI::PositiveNumber);
  gradcheck->add_option("--perturb-cls-ds", opt.perturb_cls_ds,
                        "Offset added to the classification d/ds (checks that the suite fails)");

  auto* sweep = app.add_subcommand("sweep", "Run schemes x corruption levels and tabulate");
  sweep->add_option("-c,--config", opt.config, "Sweep config (JSON)")->required();
  sweep->add_option("-o,--out", opt.out, "Output directory (overrides output_dir)");
  sweep->add_option("--seed", opt.seed, "Base seed override");
  sweep->add_flag("-v,--verbose", opt.verbosity, "Increase console verbosity");

  auto* gen = app.add_subcommand("gen-data", "Write the (corrupted) train and clean test datasets");
  gen->add_option("-c,--config", opt.config, "Run config (JSON)")->required();
  gen->add_option("-o,--out", opt.out, "Output directory");
  gen->add_option("--seed", opt.seed, "Base seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (print_defaults) {
      std::cout << ilt::to_json(ilt::RunConfig{}).dump(2) << '\n';
      return kExitOk;
    }
    if (train->parsed()) return cmd_train(opt);
    if (detect->parsed()) return cmd_detect(opt);
    if (gradcheck->parsed()) return cmd_gradcheck(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    if (gen->parsed()) return cmd_gen_data(opt);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const ilt::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  } catch (const ilt::NumericalError& e) {
    std::cerr << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

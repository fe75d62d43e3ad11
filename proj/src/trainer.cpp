#include "ilt/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ilt/errors.hpp"
#include "ilt/losses.hpp"
#include "ilt/rng.hpp"
#include "ilt/stats.hpp"

namespace ilt {

TrainingAborted::TrainingAborted(int epoch, std::size_t batch, const std::string& what)
    : NumericalError("run aborted at epoch " + std::to_string(epoch) + ", batch " +
                     std::to_string(batch) + ": " + what),
      epoch_(epoch),
      batch_(batch) {}

BatchLossEval evaluate_batch_losses(const SharedTrunkModel& model, const Batch& batch,
                                    const std::vector<TaskSpec>& tasks) {
  BatchLossEval out{model.forward(batch.inputs), {}, {}};
  const auto rows = batch.inputs.rows();
  out.raw.resize(rows, static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const Matrix& pred = out.forward.outputs[k];
    Matrix d(pred.rows(), pred.cols());
    for (Eigen::Index i = 0; i < rows; ++i) {
      const std::span<const double> p(pred.row(i).data(), static_cast<std::size_t>(pred.cols()));
      std::vector<double> g;
      if (tasks[k].kind == TaskKind::Classification) {
        const auto label = batch.targets[k].classes[static_cast<std::size_t>(i)];
        out.raw(i, static_cast<Eigen::Index>(k)) = cls_raw(p, label);
        g = cls_raw_grad(p, label);
      } else {
        const auto& t = batch.targets[k].values;
        const std::span<const double> y(t.row(i).data(), static_cast<std::size_t>(t.cols()));
        out.raw(i, static_cast<Eigen::Index>(k)) = reg_raw(p, y);
        g = reg_raw_grad(p, y);
      }
      for (Eigen::Index j = 0; j < d.cols(); ++j) d(i, j) = g[static_cast<std::size_t>(j)];
    }
    out.d_raw.push_back(std::move(d));
  }
  return out;
}

std::vector<Matrix> route_output_grads(const std::vector<Matrix>& d_raw,
                                       const Eigen::MatrixXd& multipliers) {
  std::vector<Matrix> grads;
  for (std::size_t k = 0; k < d_raw.size(); ++k) {
    Matrix g = d_raw[k];
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      g.row(i) *= multipliers(i, static_cast<Eigen::Index>(k));
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

std::vector<double> evaluate(const SharedTrunkModel& model, const TrainingData& data) {
  if (data.input_dim() != model.dims().input_dim || data.head_dims() != model.dims().head_dims) {
    throw ShapeError("evaluate: dataset tasks do not match model heads");
  }
  const auto outputs = model.predict(data.inputs);
  std::vector<double> metrics;
  for (std::size_t k = 0; k < data.num_tasks(); ++k) {
    const Matrix& pred = outputs[k];
    if (data.tasks[k].kind == TaskKind::Classification) {
      std::size_t correct = 0;
      for (Eigen::Index i = 0; i < pred.rows(); ++i) {
        Eigen::Index best = 0;
        pred.row(i).maxCoeff(&best);
        correct += static_cast<std::size_t>(best) == data.targets[k].classes[static_cast<std::size_t>(i)];
      }
      metrics.push_back(static_cast<double>(correct) / static_cast<double>(pred.rows()));
    } else {
      metrics.push_back((pred - data.targets[k].values).squaredNorm() /
                        static_cast<double>(pred.size()));
    }
  }
  return metrics;
}

std::string metric_name(const TaskSpec& task, std::size_t k) {
  return "task" + std::to_string(k) +
         (task.kind == TaskKind::Classification ? "_accuracy" : "_mse");
}

PreparedData prepare_data(const RunConfig& config) {
  auto gen = config.data;
  const auto plan = seeds(config.seed);
  gen.seed = plan.data;
  auto splits = generate_splits(gen);
  PreparedData out{std::move(splits.train), std::move(splits.test), std::nullopt};
  switch (config.corruption.target) {
    case CorruptionTarget::None:
      break;
    case CorruptionTarget::Classification:
      corrupt_classification(out.train, 0, config.corruption.fraction, plan.corruption);
      out.corrupted_task = 0;
      break;
    case CorruptionTarget::Regression:
      corrupt_regression(out.train, 1, config.corruption.fraction, plan.corruption);
      out.corrupted_task = 1;
      break;
  }
  return out;
}

RunResult train_one(const RunConfig& config, const TrainingData& train, const TrainingData& test,
                    std::uint64_t run_seed, int run_index, const TrainHooks& hooks,
                    spdlog::logger* log) {
  config.validate();
  const auto num_tasks = train.num_tasks();
  LayerDims dims{train.input_dim(), config.model.hidden, train.head_dims()};
  SharedTrunkModel model(dims, config.model.activation);
  model.init(init_seed(run_seed));
  Optimizer optimizer(config.optimizer.kind, config.optimizer.lr, config.optimizer.momentum,
                      config.optimizer.beta2, config.optimizer.epsilon);
  auto weighter = make_weighter(config.weighting, train.kinds(), train.size());
  Rng shuffle_rng(shuffle_seed(run_seed));

  const int detection_epoch = config.resolved_detection_epoch();
  const auto n = train.size();
  const auto batch_size = std::min(config.train.batch_size, n);

  RunResult result;
  result.run = run_index;
  result.run_seed = run_seed;

  for (int epoch = 0; epoch < config.train.epochs; ++epoch) {
    weighter->begin_epoch(epoch);
    const auto order = random_permutation(n, shuffle_rng);
    std::vector<double> loss_sum(num_tasks, 0.0);
    const double epoch_lr = optimizer.lr();

    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batch_index) {
      const auto stop = std::min(n, start + batch_size);
      const std::span<const std::size_t> ids(order.data() + start, stop - start);
      try {
        const auto batch = train.batch(ids);
        const auto losses = evaluate_batch_losses(model, batch, train.tasks);
        const auto weighting = weighter->weigh(ids, losses.raw);
        if (!std::isfinite(weighting.total)) {
          throw NumericalError("non-finite total loss");
        }
        model.zero_grads();
        model.backward(losses.forward.cache, route_output_grads(losses.d_raw, weighting.multipliers));
        auto params = model.params();
        optimizer.step(params);
        weighter->update(ids, losses.raw);
        for (std::size_t k = 0; k < num_tasks; ++k) {
          loss_sum[k] += losses.raw.col(static_cast<Eigen::Index>(k)).sum();
        }
      } catch (const NumericalError& e) {
        throw TrainingAborted(epoch, batch_index, e.what());
      }
      if (hooks.on_step) hooks.on_step(epoch, batch_index, model, *weighter);
    }

    EpochRecord record;
    record.run = run_index;
    record.epoch = epoch;
    record.lr = epoch_lr;
    for (const double s : loss_sum) record.train_loss.push_back(s / static_cast<double>(n));
    weighter->end_epoch(record.train_loss);
    const bool last = epoch + 1 == config.train.epochs;
    if (last || (epoch + 1) % config.train.eval_every == 0) {
      record.eval = evaluate(model, test);
    } else {
      record.eval.assign(num_tasks, std::numeric_limits<double>::quiet_NaN());
    }
    record.diagnostics = weighter->diagnostics();

    if (const auto* table = weighter->table()) {
      const bool periodic =
          config.train.snapshot_every > 0 && (epoch + 1) % config.train.snapshot_every == 0;
      if (periodic || epoch == detection_epoch || last) {
        result.snapshots.push_back(table->snapshot(epoch));
      }
      if (epoch == detection_epoch) result.detection_snapshot = table->snapshot(epoch);
      if (last) result.final_snapshot = table->snapshot(epoch);
    }

    if (log) {
      std::ostringstream line;
      line << "run " << run_index << " epoch " << epoch << " lr " << epoch_lr;
      for (std::size_t k = 0; k < num_tasks; ++k) {
        line << ' ' << metric_name(train.tasks[k], k) << '=' << record.eval[k];
      }
      log->info(line.str());
    }
    if (hooks.on_epoch) hooks.on_epoch(record, *weighter);
    result.epochs.push_back(std::move(record));

    if (config.optimizer.decay_every > 0 && (epoch + 1) % config.optimizer.decay_every == 0) {
      optimizer.set_lr(optimizer.lr() * config.optimizer.decay_factor);
    }
  }
  result.model = std::move(model);
  return result;
}

namespace {

void aggregate_runs(RepeatedResult& out, const TrainingData& test) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& run : out.runs) {
    if (run.aborted || run.epochs.empty()) continue;
    const auto& last = run.epochs.back();
    for (std::size_t k = 0; k < test.num_tasks(); ++k) {
      values[metric_name(test.tasks[k], k)].push_back(last.eval[k]);
      values["task" + std::to_string(k) + "_train_loss"].push_back(last.train_loss[k]);
    }
  }
  for (auto& [name, v] : values) {
    out.aggregate[name] = {stats::mean(v), stats::stddev(v), v};
  }
}

}  // namespace

RepeatedResult train_repeated(const RunConfig& config, const PreparedData& data,
                              const std::vector<std::uint64_t>& run_seeds, spdlog::logger* log) {
  if (run_seeds.empty()) {
    throw ConfigError("train.repeats must be >= 1");
  }
  RepeatedResult out;
  out.config = config;
  for (std::size_t r = 0; r < run_seeds.size(); ++r) {
    try {
      out.runs.push_back(train_one(config, data.train.data(), data.test.data(), run_seeds[r],
                                   static_cast<int>(r), {}, log));
    } catch (const TrainingAborted& e) {
      RunResult failed;
      failed.run = static_cast<int>(r);
      failed.run_seed = run_seeds[r];
      failed.aborted = true;
      failed.abort_reason = e.what();
      out.runs.push_back(std::move(failed));
      out.partial = true;
      out.failures.push_back("run " + std::to_string(r) + ": " + e.what());
      if (log) log->error("run {} aborted: {}", r, e.what());
    }
  }
  aggregate_runs(out, data.test.data());
  return out;
}

RepeatedResult train_repeated(const RunConfig& config, spdlog::logger* log) {
  config.validate();
  const auto data = prepare_data(config);
  std::vector<std::uint64_t> run_seeds;
  for (int r = 0; r < config.train.repeats; ++r) {
    run_seeds.push_back(config.seed + static_cast<std::uint64_t>(r));
  }
  return train_repeated(config, data, run_seeds, log);
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<TaskSpec> task_specs(const RunConfig& config) {
  return {{TaskKind::Classification, config.data.classes},
          {TaskKind::Regression, config.data.reg_dim}};
}

}  // namespace

std::string metrics_csv(const RepeatedResult& result) {
  const auto tasks = task_specs(result.config);
  std::ostringstream out;
  out << "run,seed,epoch,lr";
  for (std::size_t k = 0; k < tasks.size(); ++k) out << ",task" << k << "_train_loss";
  for (std::size_t k = 0; k < tasks.size(); ++k) out << ',' << metric_name(tasks[k], k);
  const RunResult* first = nullptr;
  for (const auto& run : result.runs) {
    if (!run.epochs.empty()) {
      first = &run;
      break;
    }
  }
  if (first) {
    for (const auto& [name, _] : first->epochs.front().diagnostics) out << ',' << name;
  }
  out << '\n';
  for (const auto& run : result.runs) {
    for (const auto& e : run.epochs) {
      out << e.run << ',' << run.run_seed << ',' << e.epoch << ',' << fmt_double(e.lr);
      for (const double v : e.train_loss) out << ',' << fmt_double(v);
      for (const double v : e.eval) out << ',' << fmt_double(v);
      for (const auto& [_, v] : e.diagnostics) out << ',' << fmt_double(v);
      out << '\n';
    }
  }
  return out.str();
}

nlohmann::json aggregate_json(const RepeatedResult& result) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [name, summary] : result.aggregate) {
    metrics[name] = {{"mean", summary.mean}, {"std", summary.std}, {"values", summary.values}};
  }
  std::size_t completed = 0;
  for (const auto& run : result.runs) completed += run.aborted ? 0 : 1;
  return {{"scheme", to_string(result.config.weighting.scheme)},
          {"runs", result.runs.size()},
          {"completed_runs", completed},
          {"partial", result.partial},
          {"failures", result.failures},
          {"metrics", metrics}};
}

std::filesystem::path snapshot_path(const std::filesystem::path& dir, int run, int epoch) {
  return dir / "snapshots" / ("run" + std::to_string(run) + "_epoch" + std::to_string(epoch) + ".txt");
}

void write_run_artifacts(const RepeatedResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_config(result.config, dir / "config.json");
  {
    std::ofstream out(dir / "metrics.csv");
    out << metrics_csv(result);
  }
  {
    std::ofstream out(dir / "aggregate.json");
    out << aggregate_json(result).dump(2) << '\n';
  }
  bool any_snapshot = false;
  for (const auto& run : result.runs) any_snapshot |= !run.snapshots.empty();
  if (any_snapshot) {
    std::filesystem::create_directories(dir / "snapshots");
    for (const auto& run : result.runs) {
      for (const auto& snap : run.snapshots) {
        write_snapshot(snap, snapshot_path(dir, run.run, snap.epoch()));
      }
    }
  }
}

}  // namespace ilt

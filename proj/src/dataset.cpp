#include "ilt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ilt/errors.hpp"
#include "ilt/rng.hpp"

namespace ilt {

std::vector<TaskKind> TrainingData::kinds() const {
  std::vector<TaskKind> out;
  for (const auto& t : tasks) out.push_back(t.kind);
  return out;
}

std::vector<std::size_t> TrainingData::head_dims() const {
  std::vector<std::size_t> out;
  for (const auto& t : tasks) out.push_back(t.dim);
  return out;
}

void TrainingData::validate() const {
  if (targets.size() != tasks.size()) {
    throw ShapeError("dataset has " + std::to_string(targets.size()) + " target sets for " +
                     std::to_string(tasks.size()) + " tasks");
  }
  const auto n = size();
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    const auto& t = targets[k];
    if (tasks[k].kind == TaskKind::Classification) {
      if (t.classes.size() != n) throw ShapeError("task " + std::to_string(k) + ": label count mismatch");
      for (const auto c : t.classes) {
        if (c >= tasks[k].dim) throw ShapeError("task " + std::to_string(k) + ": label out of range");
      }
    } else {
      if (static_cast<std::size_t>(t.values.rows()) != n ||
          static_cast<std::size_t>(t.values.cols()) != tasks[k].dim) {
        throw ShapeError("task " + std::to_string(k) + ": regression target shape mismatch");
      }
    }
  }
}

Batch TrainingData::batch(std::span<const std::size_t> instance_ids) const {
  Batch b;
  b.instance_ids.assign(instance_ids.begin(), instance_ids.end());
  const auto rows = static_cast<Eigen::Index>(instance_ids.size());
  b.inputs.resize(rows, inputs.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto i = instance_ids[static_cast<std::size_t>(r)];
    if (i >= size()) throw std::out_of_range("batch: instance id " + std::to_string(i));
    b.inputs.row(r) = inputs.row(static_cast<Eigen::Index>(i));
  }
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    TaskTargets t;
    if (tasks[k].kind == TaskKind::Classification) {
      for (const auto i : instance_ids) t.classes.push_back(targets[k].classes[i]);
    } else {
      t.values.resize(rows, targets[k].values.cols());
      for (Eigen::Index r = 0; r < rows; ++r) {
        t.values.row(r) =
            targets[k].values.row(static_cast<Eigen::Index>(instance_ids[static_cast<std::size_t>(r)]));
      }
    }
    b.targets.push_back(std::move(t));
  }
  return b;
}

MultiTaskDataset::MultiTaskDataset(TrainingData data)
    : data_(std::move(data)),
      masks_(data_.num_tasks(), std::vector<bool>(data_.size(), false)),
      applied_(data_.num_tasks(), false) {
  data_.validate();
}

const std::vector<bool>& MultiTaskDataset::corrupted(std::size_t task) const {
  if (task >= masks_.size()) throw std::out_of_range("task " + std::to_string(task));
  return masks_[task];
}

bool MultiTaskDataset::corruption_applied(std::size_t task) const {
  if (task >= applied_.size()) throw std::out_of_range("task " + std::to_string(task));
  return applied_[task];
}

std::size_t MultiTaskDataset::corrupted_count(std::size_t task) const {
  const auto& m = corrupted(task);
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
}

SyntheticProblem make_problem(std::size_t input_dim, std::size_t classes, std::size_t reg_dim,
                              std::uint64_t seed) {
  if (input_dim == 0 || reg_dim == 0) {
    throw std::invalid_argument("generator: input and regression dimensions must be >= 1");
  }
  if (classes < 2) {
    throw std::invalid_argument("generator: need at least 2 classes");
  }
  Rng rng(derive_seed(seed, "problem"));
  const auto d = static_cast<Eigen::Index>(input_dim);
  SyntheticProblem p{input_dim, classes, reg_dim, Matrix(static_cast<Eigen::Index>(classes), d),
                     Matrix(static_cast<Eigen::Index>(reg_dim), d),
                     Matrix(static_cast<Eigen::Index>(reg_dim), d)};
  for (Eigen::Index c = 0; c < p.means.rows(); ++c) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < d; ++j) p.means(c, j) = rng.normal();
      norm = p.means.row(c).norm();
    } while (norm == 0.0);
    p.means.row(c) *= 3.0 / norm;
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (Eigen::Index r = 0; r < p.linear.rows(); ++r) {
    for (Eigen::Index j = 0; j < d; ++j) p.linear(r, j) = scale * rng.normal();
  }
  for (Eigen::Index r = 0; r < p.freq.rows(); ++r) {
    for (Eigen::Index j = 0; j < d; ++j) p.freq(r, j) = rng.normal();
  }
  return p;
}

MultiTaskDataset sample_dataset(const SyntheticProblem& problem, std::size_t n,
                                std::uint64_t seed) {
  if (n == 0) {
    throw std::invalid_argument("generator: n must be >= 1");
  }
  Rng rng(seed);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto d = static_cast<Eigen::Index>(problem.input_dim);
  TrainingData data;
  data.tasks = {{TaskKind::Classification, problem.classes},
                {TaskKind::Regression, problem.reg_dim}};
  data.inputs.resize(rows, d);
  TaskTargets labels;
  TaskTargets values;
  values.values.resize(rows, static_cast<Eigen::Index>(problem.reg_dim));
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto c = rng.index(problem.classes);
    labels.classes.push_back(c);
    for (Eigen::Index j = 0; j < d; ++j) {
      data.inputs(i, j) = problem.means(static_cast<Eigen::Index>(c), j) + rng.normal();
    }
  }
  const Matrix lin = data.inputs * problem.linear.transpose();
  const Matrix phase = data.inputs * problem.freq.transpose();
  values.values = lin + 0.1 * phase.array().sin().matrix();
  data.targets = {std::move(labels), std::move(values)};
  return MultiTaskDataset(std::move(data));
}

MultiTaskDataset generate(std::size_t n, std::size_t input_dim, std::size_t classes,
                          std::uint64_t seed, std::size_t reg_dim) {
  return sample_dataset(make_problem(input_dim, classes, reg_dim, seed), n,
                        derive_seed(seed, "train"));
}

DatasetSplits generate_splits(const GeneratorConfig& config) {
  const auto problem =
      make_problem(config.input_dim, config.classes, config.reg_dim, config.seed);
  return {sample_dataset(problem, config.n_train, derive_seed(config.seed, "train")),
          sample_dataset(problem, config.n_test, derive_seed(config.seed, "test"))};
}

std::size_t corruption_count(double fraction, std::size_t n) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("corruption fraction must be in (0, 1]");
  }
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  return std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
}

namespace {

std::vector<std::size_t> choose_subset(std::size_t n, std::size_t count, Rng& rng) {
  auto perm = random_permutation(n, rng);
  perm.resize(count);
  std::sort(perm.begin(), perm.end());
  return perm;
}

void require_uncorrupted(const MultiTaskDataset& ds, std::size_t task, TaskKind kind) {
  if (task >= ds.data().num_tasks()) {
    throw std::out_of_range("corrupt: task " + std::to_string(task) + " out of range");
  }
  if (ds.data().tasks[task].kind != kind) {
    throw std::invalid_argument("corrupt: task " + std::to_string(task) + " is not " +
                                to_string(kind));
  }
  if (ds.corruption_applied(task)) {
    throw std::logic_error("corrupt: task " + std::to_string(task) + " was already corrupted");
  }
}

}  // namespace

void corrupt_classification(MultiTaskDataset& dataset, std::size_t task, double fraction,
                            std::uint64_t seed) {
  const auto count = corruption_count(fraction, dataset.size());
  require_uncorrupted(dataset, task, TaskKind::Classification);
  Rng rng(seed);
  const auto subset = choose_subset(dataset.size(), count, rng);
  const auto relabel = random_derangement(dataset.data_.tasks[task].dim, rng);
  auto& labels = dataset.data_.targets[task].classes;
  for (const auto i : subset) {
    labels[i] = relabel[labels[i]];
    dataset.masks_[task][i] = true;
  }
  dataset.applied_[task] = true;
}

void corrupt_regression(MultiTaskDataset& dataset, std::size_t task, double fraction,
                        std::uint64_t seed) {
  const auto count = corruption_count(fraction, dataset.size());
  require_uncorrupted(dataset, task, TaskKind::Regression);
  Rng rng(seed);
  const auto subset = choose_subset(dataset.size(), count, rng);
  auto& values = dataset.data_.targets[task].values;
  const Eigen::RowVectorXd lo = values.colwise().minCoeff();
  const Eigen::RowVectorXd hi = values.colwise().maxCoeff();
  for (const auto i : subset) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      values(r, j) += rng.uniform(lo(j), hi(j));
    }
    dataset.masks_[task][i] = true;
  }
  dataset.applied_[task] = true;
}

void write_dataset(const MultiTaskDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  const auto& data = dataset.data();
  out << "# n=" << data.size() << " d=" << data.input_dim() << " K=" << data.num_tasks()
      << " tasks=";
  for (std::size_t k = 0; k < data.num_tasks(); ++k) {
    out << (k ? "," : "") << to_string(data.tasks[k].kind) << ':' << data.tasks[k].dim;
  }
  out << '\n';
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << ' ' << buf;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << i;
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) put(data.inputs(r, j));
    for (std::size_t k = 0; k < data.num_tasks(); ++k) {
      if (data.tasks[k].kind == TaskKind::Classification) {
        out << ' ' << data.targets[k].classes[i];
      } else {
        for (Eigen::Index j = 0; j < data.targets[k].values.cols(); ++j) {
          put(data.targets[k].values(r, j));
        }
      }
    }
    for (std::size_t k = 0; k < data.num_tasks(); ++k) {
      out << ' ' << (dataset.corrupted(k)[i] ? 1 : 0);
    }
    out << '\n';
  }
}

MultiTaskDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read dataset " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t n = 0, d = 0, num_tasks = 0;
  char tasks_buf[512] = {0};
  if (std::sscanf(header.c_str(), "# n=%zu d=%zu K=%zu tasks=%511s", &n, &d, &num_tasks,
                  tasks_buf) != 4) {
    throw std::runtime_error("bad dataset header in " + path.string());
  }
  TrainingData data;
  std::stringstream task_list(tasks_buf);
  std::string item;
  while (std::getline(task_list, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::runtime_error("bad task entry '" + item + "'");
    data.tasks.push_back({parse_task_kind(item.substr(0, colon)),
                          static_cast<std::size_t>(std::stoul(item.substr(colon + 1)))});
  }
  if (data.tasks.size() != num_tasks) throw std::runtime_error("task count mismatch in header");
  const auto rows = static_cast<Eigen::Index>(n);
  data.inputs.resize(rows, static_cast<Eigen::Index>(d));
  data.targets.resize(num_tasks);
  for (std::size_t k = 0; k < num_tasks; ++k) {
    if (data.tasks[k].kind == TaskKind::Classification) {
      data.targets[k].classes.resize(n);
    } else {
      data.targets[k].values.resize(rows, static_cast<Eigen::Index>(data.tasks[k].dim));
    }
  }
  std::vector<std::vector<bool>> masks(num_tasks, std::vector<bool>(n, false));
  for (Eigen::Index r = 0; r < rows; ++r) {
    std::size_t id = 0;
    in >> id;
    for (Eigen::Index j = 0; j < data.inputs.cols(); ++j) in >> data.inputs(r, j);
    for (std::size_t k = 0; k < num_tasks; ++k) {
      if (data.tasks[k].kind == TaskKind::Classification) {
        in >> data.targets[k].classes[static_cast<std::size_t>(r)];
      } else {
        for (Eigen::Index j = 0; j < data.targets[k].values.cols(); ++j) {
          in >> data.targets[k].values(r, j);
        }
      }
    }
    for (std::size_t k = 0; k < num_tasks; ++k) {
      int flag = 0;
      in >> flag;
      masks[k][static_cast<std::size_t>(r)] = flag != 0;
    }
    if (!in || id != static_cast<std::size_t>(r)) {
      throw std::runtime_error("malformed dataset row " + std::to_string(r) + " in " + path.string());
    }
  }
  MultiTaskDataset ds(std::move(data));
  for (std::size_t k = 0; k < num_tasks; ++k) {
    ds.masks_[k] = masks[k];
    ds.applied_[k] = std::find(masks[k].begin(), masks[k].end(), true) != masks[k].end();
  }
  return ds;
}

}  // namespace ilt

#include "ilt/log_var_table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ilt/errors.hpp"

namespace ilt {

std::vector<double> TableSnapshot::column(std::size_t k) const {
  if (k >= cols()) {
    throw std::out_of_range("snapshot task " + std::to_string(k) + " out of range");
  }
  std::vector<double> out(rows());
  for (std::size_t i = 0; i < rows(); ++i) {
    out[i] = (*this)(i, k);
  }
  return out;
}

LogVarTable::LogVarTable(std::size_t n, std::size_t k, double lr, double momentum, double clamp_lo,
                         double clamp_hi)
    : lr_(lr), momentum_(momentum), clamp_lo_(clamp_lo), clamp_hi_(clamp_hi) {
  if (n == 0 || k == 0) {
    throw std::invalid_argument("LogVarTable needs N >= 1 and K >= 1");
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("LogVarTable lr must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("LogVarTable momentum must be in [0, 1)");
  }
  if (!(clamp_lo <= 0.0 && 0.0 <= clamp_hi)) {
    throw std::invalid_argument("LogVarTable clamp range must contain 0");
  }
  s_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  velocity_ = s_;
}

void LogVarTable::check_index(std::size_t i, std::size_t k) const {
  if (i >= rows()) {
    throw std::out_of_range("instance id " + std::to_string(i) + " out of range (N=" +
                            std::to_string(rows()) + ")");
  }
  if (k >= cols()) {
    throw std::out_of_range("task " + std::to_string(k) + " out of range (K=" +
                            std::to_string(cols()) + ")");
  }
}

std::vector<double> LogVarTable::gather(std::span<const std::size_t> instance_ids,
                                        std::size_t task) const {
  std::vector<double> out;
  out.reserve(instance_ids.size());
  for (const auto i : instance_ids) {
    check_index(i, task);
    out.push_back(s_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(task)));
  }
  return out;
}

void LogVarTable::sparse_step(std::span<const std::size_t> instance_ids, std::size_t task,
                              std::span<const double> grads) {
  if (grads.size() != instance_ids.size()) {
    throw ShapeError("sparse_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(instance_ids.size()) + " instances");
  }
  for (std::size_t j = 0; j < instance_ids.size(); ++j) {
    check_index(instance_ids[j], task);
    if (!std::isfinite(grads[j])) {
      throw NumericalError("non-finite log-variance gradient for instance " +
                           std::to_string(instance_ids[j]) + ", task " + std::to_string(task));
    }
  }
  std::vector<std::size_t> sorted(instance_ids.begin(), instance_ids.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("sparse_step: duplicate instance ids in batch");
  }

  const auto k = static_cast<Eigen::Index>(task);
  for (std::size_t j = 0; j < instance_ids.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(instance_ids[j]);
    velocity_(i, k) = momentum_ * velocity_(i, k) + grads[j];
    s_(i, k) = std::clamp(s_(i, k) - lr_ * velocity_(i, k), clamp_lo_, clamp_hi_);
  }
}

double LogVarTable::s(std::size_t i, std::size_t k) const {
  check_index(i, k);
  return s_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
}

double LogVarTable::velocity(std::size_t i, std::size_t k) const {
  check_index(i, k);
  return velocity_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
}

void LogVarTable::set(std::size_t i, std::size_t k, double value) {
  check_index(i, k);
  if (!(value >= clamp_lo_ && value <= clamp_hi_)) {
    throw std::invalid_argument("LogVarTable::set: value outside clamp range");
  }
  s_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = value;
}

void write_snapshot(const TableSnapshot& snapshot, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write snapshot " + path.string());
  }
  out << "# N=" << snapshot.rows() << " K=" << snapshot.cols() << " epoch=" << snapshot.epoch()
      << '\n';
  char buf[32];
  for (std::size_t i = 0; i < snapshot.rows(); ++i) {
    for (std::size_t k = 0; k < snapshot.cols(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", snapshot(i, k));
      out << (k ? " " : "") << buf;
    }
    out << '\n';
  }
}

TableSnapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read snapshot " + path.string());
  }
  std::string header;
  std::getline(in, header);
  std::size_t n = 0;
  std::size_t k = 0;
  int epoch = 0;
  if (std::sscanf(header.c_str(), "# N=%zu K=%zu epoch=%d", &n, &k, &epoch) != 3 || n == 0 ||
      k == 0) {
    throw std::runtime_error("bad snapshot header in " + path.string());
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (!(in >> values(i, j))) {
        throw std::runtime_error("truncated snapshot " + path.string());
      }
    }
  }
  return TableSnapshot(std::move(values), epoch);
}

}  // namespace ilt

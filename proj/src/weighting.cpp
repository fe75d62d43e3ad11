#include "ilt/weighting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "ilt/errors.hpp"
#include "ilt/stats.hpp"

namespace ilt {

Scheme parse_scheme(const std::string& name) {
  if (name == "equal") return Scheme::Equal;
  if (name == "mtu") return Scheme::Mtu;
  if (name == "dwa") return Scheme::Dwa;
  if (name == "gls") return Scheme::Gls;
  if (name == "ilt") return Scheme::Ilt;
  throw ConfigError("unknown weighting scheme '" + name + "' (expected equal, mtu, dwa, gls or ilt)");
}

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::Equal:
      return "equal";
    case Scheme::Mtu:
      return "mtu";
    case Scheme::Dwa:
      return "dwa";
    case Scheme::Gls:
      return "gls";
    case Scheme::Ilt:
      return "ilt";
  }
  return "?";
}

std::vector<double> equal_weights(std::size_t num_tasks) {
  return std::vector<double>(num_tasks, 1.0);
}

MtuState::MtuState(std::size_t num_tasks, double lr_, double momentum_, double lo, double hi)
    : s(num_tasks, 0.0),
      velocity(num_tasks, 0.0),
      lr(lr_),
      momentum(momentum_),
      clamp_lo(lo),
      clamp_hi(hi) {
  if (num_tasks == 0) {
    throw std::invalid_argument("MtuState needs at least one task");
  }
}

void MtuState::step(std::span<const double> grads) {
  if (grads.size() != s.size()) {
    throw ShapeError("MtuState::step: gradient count mismatch");
  }
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!std::isfinite(grads[k])) {
      throw NumericalError("non-finite MTU gradient for task " + std::to_string(k));
    }
    velocity[k] = momentum * velocity[k] + grads[k];
    s[k] = std::clamp(s[k] - lr * velocity[k], clamp_lo, clamp_hi);
  }
}

MtuResult mtu_weighted_total(std::span<const double> raw_means, std::span<const TaskKind> kinds,
                             const MtuState& state) {
  if (raw_means.size() != kinds.size() || raw_means.size() != state.s.size()) {
    throw ShapeError("mtu_weighted_total: task count mismatch");
  }
  MtuResult out{0.0, std::vector<double>(raw_means.size())};
  for (std::size_t k = 0; k < raw_means.size(); ++k) {
    out.total += weighted_loss(raw_means[k], state.s[k], kinds[k]);
    out.d_s[k] = weighted_loss_ds(raw_means[k], state.s[k], kinds[k]);
  }
  return out;
}

DwaState::DwaState(std::size_t num_tasks, double temperature_, std::vector<double> scales_)
    : temperature(temperature_), scales(std::move(scales_)) {
  if (num_tasks == 0) {
    throw std::invalid_argument("DwaState needs at least one task");
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("DWA temperature must be > 0");
  }
  if (scales.empty()) {
    scales.assign(num_tasks, 1.0);
  }
  if (scales.size() != num_tasks) {
    throw ShapeError("DWA scale factors must have one entry per task");
  }
}

void DwaState::record_epoch(std::span<const double> raw_means) {
  if (raw_means.size() != scales.size()) {
    throw ShapeError("DwaState::record_epoch: task count mismatch");
  }
  std::vector<double> scaled(raw_means.size());
  for (std::size_t k = 0; k < scaled.size(); ++k) {
    scaled[k] = scales[k] * raw_means[k];
  }
  history.push_back(std::move(scaled));
  if (history.size() > 2) {
    history.erase(history.begin());
  }
}

std::vector<double> dwa_weights(const DwaState& state, int epoch) {
  const std::size_t num_tasks = state.num_tasks();
  std::vector<double> w(num_tasks, 1.0);
  if (epoch >= 2) {
    if (state.history.size() < 2) {
      throw std::logic_error("dwa_weights: epoch " + std::to_string(epoch) +
                             " needs two recorded epochs");
    }
    const auto& older = state.history[0];
    const auto& newer = state.history[1];
    for (std::size_t k = 0; k < num_tasks; ++k) {
      if (older[k] == 0.0) {
        spdlog::warn("DWA: zero loss for task {} two epochs back; using ratio 1", k);
        continue;
      }
      w[k] = newer[k] / older[k];
    }
  }
  const double top = *std::max_element(w.begin(), w.end()) / state.temperature;
  std::vector<double> lambda(num_tasks);
  double sum = 0.0;
  for (std::size_t k = 0; k < num_tasks; ++k) {
    lambda[k] = std::exp(w[k] / state.temperature - top);
    sum += lambda[k];
  }
  for (auto& l : lambda) {
    l = static_cast<double>(num_tasks) * l / sum;
  }
  return lambda;
}

GlsResult gls_total(std::span<const double> losses) {
  if (losses.empty()) {
    throw ShapeError("gls_total: no tasks");
  }
  double log_sum = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    if (!(losses[k] > 0.0) || !std::isfinite(losses[k])) {
      throw std::domain_error("gls_total: loss for task " + std::to_string(k) +
                              " must be finite and > 0");
    }
    log_sum += std::log(losses[k]);
  }
  const auto num_tasks = static_cast<double>(losses.size());
  GlsResult out{std::exp(log_sum / num_tasks), std::vector<double>(losses.size())};
  for (std::size_t k = 0; k < losses.size(); ++k) {
    out.factors[k] = out.total / (num_tasks * losses[k]);
  }
  return out;
}

namespace {

std::vector<double> column_means(const Eigen::MatrixXd& raw) {
  std::vector<double> means(static_cast<std::size_t>(raw.cols()));
  for (Eigen::Index k = 0; k < raw.cols(); ++k) {
    means[static_cast<std::size_t>(k)] = raw.col(k).mean();
  }
  return means;
}

void check_batch(std::span<const std::size_t> ids, const Eigen::MatrixXd& raw,
                 std::size_t num_tasks) {
  if (raw.rows() == 0 || static_cast<std::size_t>(raw.rows()) != ids.size() ||
      static_cast<std::size_t>(raw.cols()) != num_tasks) {
    throw ShapeError("weigh: raw loss table does not match batch/tasks");
  }
}

std::string task_key(const char* name, std::size_t k) { return name + std::to_string(k); }

class EqualWeighter final : public Weighter {
public:
  EqualWeighter(std::size_t num_tasks, std::vector<double> scales)
      : num_tasks_(num_tasks), scales_(std::move(scales)) {
    if (scales_.empty()) scales_ = equal_weights(num_tasks);
    if (scales_.size() != num_tasks) throw ShapeError("task_scales must have one entry per task");
  }
  Scheme scheme() const override { return Scheme::Equal; }

  BatchWeighting weigh(std::span<const std::size_t> ids, const Eigen::MatrixXd& raw) override {
    check_batch(ids, raw, num_tasks_);
    const auto batch = static_cast<double>(raw.rows());
    BatchWeighting out{0.0, Eigen::MatrixXd(raw.rows(), raw.cols())};
    for (std::size_t k = 0; k < num_tasks_; ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      out.total += scales_[k] * raw.col(col).mean();
      out.multipliers.col(col).setConstant(scales_[k] / batch);
    }
    return out;
  }

  Diagnostics diagnostics() const override {
    Diagnostics d;
    for (std::size_t k = 0; k < num_tasks_; ++k) d.emplace_back(task_key("weight", k), scales_[k]);
    return d;
  }

private:
  std::size_t num_tasks_;
  std::vector<double> scales_;
};

class MtuWeighter final : public Weighter {
public:
  MtuWeighter(std::vector<TaskKind> kinds, const WeightingConfig& config)
      : kinds_(std::move(kinds)),
        state_(kinds_.size(), config.mtu_lr, config.mtu_momentum, config.clamp_lo,
               config.clamp_hi) {}
  Scheme scheme() const override { return Scheme::Mtu; }

  BatchWeighting weigh(std::span<const std::size_t> ids, const Eigen::MatrixXd& raw) override {
    check_batch(ids, raw, kinds_.size());
    const auto means = column_means(raw);
    const auto result = mtu_weighted_total(means, kinds_, state_);
    pending_grads_ = result.d_s;
    const auto batch = static_cast<double>(raw.rows());
    BatchWeighting out{result.total, Eigen::MatrixXd(raw.rows(), raw.cols())};
    for (std::size_t k = 0; k < kinds_.size(); ++k) {
      out.multipliers.col(static_cast<Eigen::Index>(k))
          .setConstant(loss_coefficient(kinds_[k]) * std::exp(-state_.s[k]) / batch);
    }
    return out;
  }

  void update(std::span<const std::size_t>, const Eigen::MatrixXd&) override {
    state_.step(pending_grads_);
  }

  Diagnostics diagnostics() const override {
    Diagnostics d;
    for (std::size_t k = 0; k < kinds_.size(); ++k) d.emplace_back(task_key("s", k), state_.s[k]);
    return d;
  }

  const MtuState* mtu_state() const override { return &state_; }

private:
  std::vector<TaskKind> kinds_;
  MtuState state_;
  std::vector<double> pending_grads_;
};

class DwaWeighter final : public Weighter {
public:
  DwaWeighter(std::size_t num_tasks, const WeightingConfig& config)
      : state_(num_tasks, config.dwa_temperature, config.task_scales),
        lambda_(num_tasks, 1.0) {}
  Scheme scheme() const override { return Scheme::Dwa; }

  void begin_epoch(int epoch) override { lambda_ = dwa_weights(state_, epoch); }

  BatchWeighting weigh(std::span<const std::size_t> ids, const Eigen::MatrixXd& raw) override {
    check_batch(ids, raw, lambda_.size());
    const auto batch = static_cast<double>(raw.rows());
    BatchWeighting out{0.0, Eigen::MatrixXd(raw.rows(), raw.cols())};
    for (std::size_t k = 0; k < lambda_.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      const double w = lambda_[k] * state_.scales[k];
      out.total += w * raw.col(col).mean();
      out.multipliers.col(col).setConstant(w / batch);
    }
    return out;
  }

  void end_epoch(std::span<const double> epoch_mean_raw) override {
    state_.record_epoch(epoch_mean_raw);
  }

  Diagnostics diagnostics() const override {
    Diagnostics d;
    for (std::size_t k = 0; k < lambda_.size(); ++k) d.emplace_back(task_key("lambda", k), lambda_[k]);
    return d;
  }

private:
  DwaState state_;
  std::vector<double> lambda_;
};

class GlsWeighter final : public Weighter {
public:
  explicit GlsWeighter(std::size_t num_tasks) : factors_(num_tasks, 0.0) {}
  Scheme scheme() const override { return Scheme::Gls; }

  BatchWeighting weigh(std::span<const std::size_t> ids, const Eigen::MatrixXd& raw) override {
    check_batch(ids, raw, factors_.size());
    auto means = column_means(raw);
    for (auto& m : means) m = std::max(m, kGlsLossFloor);
    const auto result = gls_total(means);
    factors_ = result.factors;
    const auto batch = static_cast<double>(raw.rows());
    BatchWeighting out{result.total, Eigen::MatrixXd(raw.rows(), raw.cols())};
    for (std::size_t k = 0; k < factors_.size(); ++k) {
      out.multipliers.col(static_cast<Eigen::Index>(k)).setConstant(factors_[k] / batch);
    }
    return out;
  }

  Diagnostics diagnostics() const override {
    Diagnostics d;
    for (std::size_t k = 0; k < factors_.size(); ++k) d.emplace_back(task_key("factor", k), factors_[k]);
    return d;
  }

private:
  std::vector<double> factors_;
};

class IltWeighter final : public Weighter {
public:
  IltWeighter(std::vector<TaskKind> kinds, std::size_t num_instances, const WeightingConfig& config)
      : kinds_(std::move(kinds)),
        table_(num_instances, kinds_.size(), config.ilt_lr, config.ilt_momentum, config.clamp_lo,
               config.clamp_hi),
        tied_(config.ilt_tied_rows) {
    if (tied_) {
      all_ids_.resize(num_instances);
      std::iota(all_ids_.begin(), all_ids_.end(), std::size_t{0});
    }
  }
  Scheme scheme() const override { return Scheme::Ilt; }

  BatchWeighting weigh(std::span<const std::size_t> ids, const Eigen::MatrixXd& raw) override {
    check_batch(ids, raw, kinds_.size());
    const auto batch = static_cast<double>(raw.rows());
    BatchWeighting out{0.0, Eigen::MatrixXd(raw.rows(), raw.cols())};
    Eigen::MatrixXd weighted(raw.rows(), raw.cols());
    for (std::size_t k = 0; k < kinds_.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      const auto s = table_.gather(ids, k);
      const double c = loss_coefficient(kinds_[k]);
      for (Eigen::Index i = 0; i < raw.rows(); ++i) {
        const double si = s[static_cast<std::size_t>(i)];
        weighted(i, col) = weighted_loss(raw(i, col), si, kinds_[k]);
        out.multipliers(i, col) = c * std::exp(-si) / batch;
      }
    }
    out.total = multitask_total(weighted);
    return out;
  }

  void update(std::span<const std::size_t> ids, const Eigen::MatrixXd& raw) override {
    const auto batch = static_cast<double>(raw.rows());
    for (std::size_t k = 0; k < kinds_.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      const auto s = table_.gather(ids, k);
      std::vector<double> grads(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        grads[i] = weighted_loss_ds(raw(static_cast<Eigen::Index>(i), col), s[i], kinds_[k]) / batch;
      }
      if (tied_) {
        const double shared = std::accumulate(grads.begin(), grads.end(), 0.0);
        table_.sparse_step(all_ids_, k, std::vector<double>(all_ids_.size(), shared));
      } else {
        table_.sparse_step(ids, k, grads);
      }
    }
  }

  Diagnostics diagnostics() const override {
    Diagnostics d;
    const auto snap = table_.snapshot();
    for (std::size_t k = 0; k < kinds_.size(); ++k) {
      const auto column = snap.column(k);
      d.emplace_back(task_key("s_median", k), stats::median(column));
      d.emplace_back(task_key("s_q1_", k), stats::quantile(column, 0.25));
      d.emplace_back(task_key("s_q3_", k), stats::quantile(column, 0.75));
    }
    return d;
  }

  const LogVarTable* table() const override { return &table_; }
  LogVarTable* mutable_table() override { return &table_; }

private:
  std::vector<TaskKind> kinds_;
  LogVarTable table_;
  bool tied_;
  std::vector<std::size_t> all_ids_;
};

}  // namespace

std::unique_ptr<Weighter> make_weighter(const WeightingConfig& config,
                                        std::vector<TaskKind> kinds, std::size_t num_instances) {
  const auto num_tasks = kinds.size();
  if (num_tasks == 0) {
    throw std::invalid_argument("make_weighter: no tasks");
  }
  switch (config.scheme) {
    case Scheme::Equal:
      return std::make_unique<EqualWeighter>(num_tasks, config.task_scales);
    case Scheme::Mtu:
      return std::make_unique<MtuWeighter>(std::move(kinds), config);
    case Scheme::Dwa:
      return std::make_unique<DwaWeighter>(num_tasks, config);
    case Scheme::Gls:
      return std::make_unique<GlsWeighter>(num_tasks);
    case Scheme::Ilt:
      return std::make_unique<IltWeighter>(std::move(kinds), num_instances, config);
  }
  throw std::logic_error("make_weighter: unhandled scheme");
}

}  // namespace ilt

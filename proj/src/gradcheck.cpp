#include "ilt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ilt/dataset.hpp"
#include "ilt/losses.hpp"
#include "ilt/model.hpp"
#include "ilt/rng.hpp"
#include "ilt/trainer.hpp"
#include "ilt/weighting.hpp"

namespace ilt {

double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

double central_difference(const std::function<double(double)>& f, double x, double eps) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

namespace {

void record(GradcheckGroup& group, double analytic, double numeric, double tolerance) {
  const double err = relative_error(analytic, numeric);
  group.max_rel_error = std::max(group.max_rel_error, err);
  ++group.checked;
  group.pass = group.pass && err < tolerance;
}

// Tiny two-task problem: 3 inputs, classification over 3 classes and a
// 2-dimensional regression target, batch of 5.
struct TinyProblem {
  std::vector<TaskSpec> tasks{{TaskKind::Classification, 3}, {TaskKind::Regression, 2}};
  Batch batch;
};

TinyProblem make_tiny_problem(Rng& rng) {
  TinyProblem p;
  const Eigen::Index b = 5;
  p.batch.inputs.resize(b, 3);
  for (Eigen::Index i = 0; i < b; ++i) {
    p.batch.instance_ids.push_back(static_cast<std::size_t>(2 * i + 1));
    for (Eigen::Index j = 0; j < 3; ++j) p.batch.inputs(i, j) = rng.normal();
  }
  TaskTargets labels;
  TaskTargets values;
  values.values.resize(b, 2);
  for (Eigen::Index i = 0; i < b; ++i) {
    labels.classes.push_back(rng.index(3));
    for (Eigen::Index j = 0; j < 2; ++j) values.values(i, j) = rng.normal();
  }
  p.batch.targets = {labels, values};
  return p;
}

void check_model_theta(GradcheckGroup& group, const GradcheckOptions& opt, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "model_theta"));
  const auto problem = make_tiny_problem(rng);
  const std::vector<TaskKind> kinds{TaskKind::Classification, TaskKind::Regression};
  for (const auto activation : {Activation::Relu, Activation::Tanh}) {
    for (const auto scheme : {Scheme::Equal, Scheme::Mtu, Scheme::Dwa, Scheme::Gls, Scheme::Ilt}) {
      SharedTrunkModel model(LayerDims{3, {4, 3}, {3, 2}}, activation);
      model.init(rng.next_u64());
      // Non-zero biases so every parameter tensor carries a generic gradient.
      for (auto& p : model.params()) {
        if (p.name.ends_with(".bias")) {
          for (Eigen::Index j = 0; j < p.value->size(); ++j) p.value->data()[j] = 0.2 * rng.normal();
        }
      }
      WeightingConfig wc;
      wc.scheme = scheme;
      wc.task_scales = {0.7, 1.3};
      auto weighter = make_weighter(wc, kinds, 16);
      if (auto* table = weighter->mutable_table()) {
        for (const auto i : problem.batch.instance_ids) {
          for (std::size_t k = 0; k < 2; ++k) table->set(i, k, rng.uniform(-2.0, 2.0));
        }
      }
      weighter->begin_epoch(0);

      auto total_loss = [&]() {
        const auto losses = evaluate_batch_losses(model, problem.batch, problem.tasks);
        return weighter->weigh(problem.batch.instance_ids, losses.raw).total;
      };

      const auto losses = evaluate_batch_losses(model, problem.batch, problem.tasks);
      const auto w = weighter->weigh(problem.batch.instance_ids, losses.raw);
      model.zero_grads();
      model.backward(losses.forward.cache, route_output_grads(losses.d_raw, w.multipliers));

      for (auto& p : model.params()) {
        for (Eigen::Index j = 0; j < p.value->size(); ++j) {
          double& x = p.value->data()[j];
          const double original = x;
          x = original + opt.epsilon;
          const double up = total_loss();
          x = original - opt.epsilon;
          const double down = total_loss();
          x = original;
          record(group, p.grad->data()[j], (up - down) / (2.0 * opt.epsilon), opt.tolerance);
        }
      }
    }
  }
}

void check_loss_dpred(GradcheckGroup& group, const GradcheckOptions& opt, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "loss_dpred"));
  for (int trial = 0; trial < 20; ++trial) {
    const double s = rng.uniform(-3.0, 3.0);
    std::vector<double> pred(4), target(4);
    for (std::size_t j = 0; j < 4; ++j) {
      pred[j] = rng.normal();
      target[j] = rng.normal();
    }
    const std::size_t label = rng.index(4);
    for (const auto kind : {TaskKind::Regression, TaskKind::Classification}) {
      auto raw_of = [&](const std::vector<double>& z) {
        return kind == TaskKind::Regression ? reg_raw(z, target) : cls_raw(z, label);
      };
      const auto d_raw = kind == TaskKind::Regression ? reg_raw_grad(pred, target)
                                                      : cls_raw_grad(pred, label);
      const auto grads = weighted_loss_grads(raw_of(pred), d_raw, s, kind);
      for (std::size_t j = 0; j < pred.size(); ++j) {
        auto f = [&](double v) {
          auto z = pred;
          z[j] = v;
          return weighted_loss(raw_of(z), s, kind);
        };
        record(group, grads.d_pred[j], central_difference(f, pred[j], opt.epsilon), opt.tolerance);
      }
    }
  }
}

void check_loss_ds(GradcheckGroup& group, TaskKind kind, const GradcheckOptions& opt,
                   std::uint64_t seed) {
  Rng rng(derive_seed(seed, "loss_ds_" + to_string(kind)));
  for (int trial = 0; trial < 100; ++trial) {
    const double raw = rng.uniform(0.0, 5.0);
    const double s = rng.uniform(-4.0, 4.0);
    double analytic = weighted_loss_ds(raw, s, kind);
    if (kind == TaskKind::Classification) analytic += opt.cls_ds_perturbation;
    const auto f = [&](double v) { return weighted_loss(raw, v, kind); };
    record(group, analytic, central_difference(f, s, opt.epsilon), opt.tolerance);
  }
}

void check_mtu(GradcheckGroup& group, const GradcheckOptions& opt, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "mtu_s"));
  const std::vector<TaskKind> kinds{TaskKind::Classification, TaskKind::Regression,
                                    TaskKind::Regression};
  for (int trial = 0; trial < 20; ++trial) {
    MtuState state(kinds.size(), 0.01, 0.9);
    std::vector<double> raw(kinds.size());
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      state.s[k] = rng.uniform(-3.0, 3.0);
      raw[k] = rng.uniform(0.0, 4.0);
    }
    const auto result = mtu_weighted_total(raw, kinds, state);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      auto f = [&](double v) {
        auto probe = state;
        probe.s[k] = v;
        return mtu_weighted_total(raw, kinds, probe).total;
      };
      record(group, result.d_s[k], central_difference(f, state.s[k], opt.epsilon), opt.tolerance);
    }
  }
}

void check_gls(GradcheckGroup& group, const GradcheckOptions& opt, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gls_factors"));
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> losses(1 + rng.index(4));
    for (auto& l : losses) l = rng.uniform(0.05, 5.0);
    const auto result = gls_total(losses);
    for (std::size_t k = 0; k < losses.size(); ++k) {
      auto f = [&](double v) {
        auto probe = losses;
        probe[k] = v;
        return gls_total(probe).total;
      };
      record(group, result.factors[k], central_difference(f, losses[k], opt.epsilon), opt.tolerance);
    }
  }
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  GradcheckReport report;
  report.groups = {{"model_theta"},      {"loss_dpred"}, {"loss_ds_regression"},
                   {"loss_ds_classification"}, {"mtu_s"},      {"gls_factors"}};
  for (int i = 0; i < options.seeds; ++i) {
    const auto seed = static_cast<std::uint64_t>(1000 + i);
    check_model_theta(report.groups[0], options, seed);
    check_loss_dpred(report.groups[1], options, seed);
    check_loss_ds(report.groups[2], TaskKind::Regression, options, seed);
    check_loss_ds(report.groups[3], TaskKind::Classification, options, seed);
    check_mtu(report.groups[4], options, seed);
    check_gls(report.groups[5], options, seed);
  }
  for (const auto& g : report.groups) report.pass = report.pass && g.pass && g.checked > 0;
  return report;
}

}  // namespace ilt

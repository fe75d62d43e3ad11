#pragma once

#include <functional>
#include <string>
#include <vector>

namespace ilt {

struct GradcheckOptions {
  int seeds = 3;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Added to every analytic classification d/ds. Non-zero only to confirm
  /// the check detects a wrong gradient.
  double cls_ds_perturbation = 0.0;
};

struct GradcheckGroup {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;
  bool pass = true;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6). The floor keeps
/// exactly-zero gradients (dead ReLU units) from dividing round-off by zero.
double relative_error(double analytic, double numeric);

/// Central difference (f(x + eps) - f(x - eps)) / (2 eps).
double central_difference(const std::function<double(double)>& f, double x, double eps);

/// Groups: model_theta (every weighting scheme, relu and tanh),
/// loss_dpred, loss_ds_regression, loss_ds_classification, mtu_s,
/// gls_factors.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace ilt

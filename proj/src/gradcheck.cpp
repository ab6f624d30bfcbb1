#include "mgimn/gradcheck.hpp"

#include <cmath>

namespace mgimn {

double GradCheckReport::worst_error() const {
  double w = 0.0;
  for (const auto& r : rows) w = std::max(w, r.max_rel_error);
  return w;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParamSet& params, const GradCheckOptions& opts) {
  GradCheckReport report;
  report.tolerance = opts.tolerance;

  double base = loss_fn().item();
  double base2 = loss_fn().item();
  if (base != base2) {
    report.pass = false;
    report.diagnostic = "loss function is not deterministic: " +
                        std::to_string(base) + " vs " + std::to_string(base2);
    return report;
  }

  params.zero_grads();
  Tensor loss = loss_fn();
  loss.backward();
  if (opts.grad_tamper) opts.grad_tamper(params);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.entries().size());
  for (auto& e : params.entries()) {
    if (!e.value.has_grad()) {
      report.pass = false;
      report.diagnostic =
          "parameter '" + e.name + "' received no gradient from backward";
      return report;
    }
    auto g = e.value.grad();
    analytic.emplace_back(g.begin(), g.end());
  }
  params.zero_grads();

  double h = opts.step;
  bool all_ok = true;
  for (size_t pi = 0; pi < params.entries().size(); ++pi) {
    auto& e = params.entries()[pi];
    auto data = e.value.mutable_data();
    double worst = 0.0;
    for (size_t i = 0; i < data.size(); ++i) {
      double keep = data[i];
      data[i] = keep + h;
      double up = loss_fn().item();
      data[i] = keep - h;
      double down = loss_fn().item();
      data[i] = keep;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[pi][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    report.rows.push_back({e.name, worst});
    if (worst > opts.tolerance) all_ok = false;
  }
  report.pass = all_ok;
  return report;
}

}  // namespace mgimn

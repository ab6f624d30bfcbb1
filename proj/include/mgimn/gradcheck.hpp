#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mgimn/params.hpp"

namespace mgimn {

struct GradCheckReport {
  struct Row {
    std::string name;
    double max_rel_error = 0.0;
  };
  std::vector<Row> rows;
  double tolerance = 1e-4;
  bool pass = false;
  std::string diagnostic;  // set when the check could not run cleanly

  double worst_error() const;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-4;
  /// Test hook: mutates analytic gradients after the backward pass and
  /// before comparison. Never set outside tests.
  std::function<void(ParamSet&)> grad_tamper;
};

/// Compares the backward pass of `loss_fn` against central finite
/// differences, coordinate by coordinate, over every registered parameter.
/// The relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// `loss_fn` must be deterministic; it is evaluated twice at the base point
/// and any disagreement is reported as a failed check with a diagnostic.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           ParamSet& params,
                           const GradCheckOptions& opts = {});

}  // namespace mgimn

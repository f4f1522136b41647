#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dunal/nn.hpp"

namespace dunal {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  Index checked_entries = 0;
  bool passed = true;
};

/// Compares analytic gradients against central differences entry by entry.
///
/// `model` must be copyable and expose its trainable tensors through
/// `param_refs(Model&)`. `loss(model, grads)` returns the scalar loss and,
/// when `grads` is non-null, fills it with one gradient per tensor in
/// `param_refs` order. The loss must be deterministic (fixed masks, frozen
/// statistics or re-seeded noise). Relative error per entry is
/// |analytic - fd| / max(|analytic|, |fd|, 1e-8).
template <class Model, class LossFn>
GradCheckReport finite_diff_check(LossFn&& loss, const Model& model, double h, double tolerance) {
  GradCheckReport report;
  std::vector<Matrix> analytic;
  Model probe = model;
  loss(static_cast<const Model&>(probe), &analytic);

  auto refs = param_refs(probe);
  if (analytic.size() != refs.size()) throw UsageError("finite_diff_check: gradient count mismatch");
  for (std::size_t t = 0; t < refs.size(); ++t) {
    Matrix& tensor = *refs[t].tensor;
    if (analytic[t].rows() != tensor.rows() || analytic[t].cols() != tensor.cols())
      throw UsageError("finite_diff_check: gradient shape mismatch for " + refs[t].name);
    for (Index r = 0; r < tensor.rows(); ++r) {
      for (Index c = 0; c < tensor.cols(); ++c) {
        const double saved = tensor(r, c);
        tensor(r, c) = saved + h;
        const double up = loss(static_cast<const Model&>(probe), nullptr);
        tensor(r, c) = saved - h;
        const double down = loss(static_cast<const Model&>(probe), nullptr);
        tensor(r, c) = saved;

        const double fd = (up - down) / (2.0 * h);
        const double a = analytic[t](r, c);
        const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
        const double err = std::abs(a - fd) / denom;
        ++report.checked_entries;
        if (!(err <= report.max_relative_error)) {
          report.max_relative_error = err;
          report.worst_tensor = refs[t].name;
        }
      }
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

inline std::vector<ParamRef> param_refs(Network& net) { return net.params.refs(); }

struct GradientSuiteCase {
  std::string label;
  GradCheckReport report;
};

struct GradientSuiteReport {
  std::vector<GradientSuiteCase> cases;
  double max_relative_error = 0.0;
  bool passed = true;
};

/// Randomised finite-difference suite over small residual networks (inputs
/// and hidden widths <= 8, depth <= 3), with and without frozen-statistics
/// batchnorm, plus the depth-ELBO and mean-field objectives.
GradientSuiteReport run_gradient_suite(int network_trials, std::uint64_t seed,
                                       double h = 1e-5, double tolerance = 1e-4);

}  // namespace dunal

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "taltpp/autodiff.hpp"

namespace taltpp {

struct GradCheckOptions {
  double step = 1e-5;  // central-difference step
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
  // the floor keeps round-off on near-zero gradients from reading as large
  // relative error.
  double floor = 1e-3;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<input>[<index>]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarFn = std::function<ad::Var(ad::Tape&, std::span<const ad::Var>)>;

// Compares reverse-mode gradients of f at `inputs` with central differences.
// Throws std::domain_error if f is non-finite at any evaluated point.
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Matrix>& inputs, const GradCheckOptions& opts = {});

// Same comparison over every coordinate of every parameter in `params`; f must
// bind parameters through Tape::param. Values are restored on return.
GradCheckResult grad_check_params(const std::function<ad::Var(ad::Tape&)>& f, ParamSet& params,
                                  const GradCheckOptions& opts = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace taltpp

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "daml/autodiff.hpp"

namespace daml {

struct NamedParam {
  std::string name;
  Var var;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so entries whose true
  // gradient is ~0 are compared on an absolute scale.
  double abs_floor = 1e-5;
};

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  double max_rel_error = 0.0;
  std::string worst_param;
  bool passed = true;
};

using ScalarBuilder = std::function<Var()>;
// Scalar whose finite-difference gradient with respect to params[i] is the
// expected analytic gradient. Needed when the graph contains grad_reverse,
// whose backward is not the derivative of the forward.
using OracleBuilder = std::function<Var(std::size_t param_index)>;

/// Compares the analytic gradient of `build()` against central differences.
/// Throws Error if two evaluations of the builder disagree.
GradCheckReport finite_diff_check(std::span<NamedParam> params, const ScalarBuilder& build,
                                  const GradCheckOptions& options = {},
                                  const OracleBuilder& oracle = nullptr);

}  // namespace daml

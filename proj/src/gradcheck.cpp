#include "daml/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "daml/errors.hpp"

namespace daml {

GradCheckReport finite_diff_check(std::span<NamedParam> params, const ScalarBuilder& build,
                                  const GradCheckOptions& options, const OracleBuilder& oracle) {
  for (auto& p : params) p.var.zero_grad();

  Var root = build();
  double repeat;
  {
    NoGradGuard guard;
    repeat = build().value().item();
  }
  if (repeat != root.value().item())
    throw Error("finite_diff_check: builder is not deterministic (" + std::to_string(root.value().item()) +
                " vs " + std::to_string(repeat) + ")");
  backward(root);

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor analytic = params[i].var.grad();
    auto eval = [&] {
      NoGradGuard guard;
      return (oracle ? oracle(i) : build()).value().item();
    };
    ParamCheck check{params[i].name};
    auto values = params[i].var.mutable_value().data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + options.step;
      const double plus = eval();
      values[j] = saved - options.step;
      const double minus = eval();
      values[j] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (j == 0 || rel > check.max_rel_error) {
        check.max_rel_error = rel;
        check.worst_index = j;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    if (report.params.empty() || check.max_rel_error > report.max_rel_error) {
      report.max_rel_error = check.max_rel_error;
      report.worst_param = check.name;
    }
    report.params.push_back(std::move(check));
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace daml

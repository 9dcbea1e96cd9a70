#include "daml/adam.hpp"

#include <cmath>
#include <string>

#include "daml/errors.hpp"

namespace daml {

void adam_step(std::span<Var> params, AdamState& state) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.first_moment[i].shape() != params[i].shape() || state.second_moment[i].shape() != params[i].shape())
      throw ShapeError("adam_step: moment shape " + to_string(state.first_moment[i].shape()) +
                       " does not match parameter " + to_string(params[i].shape()));

  const auto& s = state.settings;
  ++state.step;
  const double correction1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad_populated()) continue;
    auto value = params[i].mutable_value().data();
    const auto grad = params[i].grad().data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * grad[j];
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

}  // namespace daml

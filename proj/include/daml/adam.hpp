#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "daml/autodiff.hpp"

namespace daml {

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one parameter bundle. Moments are allocated on the
/// first step to match the parameters they track.
struct AdamState {
  AdamSettings settings;
  std::int64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// One bias-corrected Adam update. Parameters whose gradient was not
/// populated since the last zero_grad() are left untouched together with
/// their moments. Gradients are not cleared.
void adam_step(std::span<Var> params, AdamState& state);

}  // namespace daml

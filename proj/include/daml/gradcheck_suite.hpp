#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "daml/gradcheck.hpp"
#include "daml/objectives.hpp"

namespace daml {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

struct SuiteOptions {
  GradCheckOptions check;
  std::uint64_t seed = 3;
};

/// Finite-difference checks of every differentiable op, the network
/// blocks and the losses, on small random inputs.
std::vector<GradCheckCase> run_op_checks(const SuiteOptions& options = {});

/// Checks the full per-batch objective of group 1 of a two-group model
/// (vocab 10, all widths 3, one source and one target document). The
/// extractor is compared against cls - eta*lambda_d*dom + lambda_m*mutual,
/// which is what the reversal layer should deliver.
GradCheckCase run_objective_check(Variant variant, const SuiteOptions& options = {});

/// Op checks followed by the objective check for every multi-term variant.
std::vector<GradCheckCase> run_gradcheck_suite(const SuiteOptions& options = {});

}  // namespace daml

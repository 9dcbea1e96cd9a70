#pragma once

#include <optional>
#include <string>
#include <vector>

#include "daml/autodiff.hpp"

namespace daml {

/// Training variants. Naive and Dann train a single group; the others
/// train two or more.
enum class Variant { Naive, Dann, Sml, Fa, Ne, Daml };
/// Which documents enter the mutual-learning KL term.
enum class ProberDomain { Target, Source, Both };

const char* to_string(Variant v);
const char* to_string(ProberDomain p);
Variant parse_variant(const std::string& name);
ProberDomain parse_prober_domain(const std::string& name);

struct LossWeights {
  double eta = 0.005;     // gradient reversal coefficient
  double lambda_d = 1.0;  // domain loss weight
  double lambda_m = 1.0;  // mutual loss weight

  void validate() const;
};

/// Forward results of one group on one batch. `discriminator` must have
/// been computed on grad_reverse(features, eta).
struct BatchOutputs {
  Var features;       // [B, d]
  Var classifier;     // [B, K]
  Var prober;         // [B, K]; empty unless the group has a prober
  Var discriminator;  // [B, 1]
  std::vector<int> domains;  // z per document
  std::vector<std::optional<int>> labels;
};

/// Constant snapshot of the peers on the same batch.
struct PeerOutputs {
  Tensor classifier;  // [B, K]
  Tensor features;    // [B, d]
};

/// Mean negative log-likelihood of the true label over source documents.
/// Zero (and disconnected from the graph) when the batch has none.
Var cls_loss(const BatchOutputs& outputs);
/// Mean binary cross-entropy of the discriminator against z.
Var dom_loss(const BatchOutputs& outputs);
/// Mean over rows of KL(teacher || student). The teacher is a constant.
Var kl_loss(const Tensor& teacher, const Var& student);
/// Mean squared Euclidean distance between paired rows.
Var fa_loss(const Var& features, const Tensor& peer_features);

struct ObjectiveTerms {
  Var total;
  Var cls;
  Var dom;     // empty for naive
  Var mutual;  // KL or feature-alignment term; empty for naive, dann, ne
};

/// Rows of the batch that the mutual term is applied to.
std::vector<std::size_t> mutual_rows(const std::vector<int>& domains, ProberDomain routing);

/// Per-group hybrid objective. Terms whose weight is zero are still
/// evaluated for reporting but do not enter `total`.
ObjectiveTerms group_objective(Variant variant, const BatchOutputs& own, const PeerOutputs& peer,
                               const LossWeights& weights, ProberDomain routing = ProberDomain::Target);

}  // namespace daml

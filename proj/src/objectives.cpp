#include "daml/objectives.hpp"

#include <cmath>

#include "daml/errors.hpp"

namespace daml {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Naive: return "naive";
    case Variant::Dann: return "dann";
    case Variant::Sml: return "sml";
    case Variant::Fa: return "fa";
    case Variant::Ne: return "ne";
    case Variant::Daml: return "daml";
  }
  return "?";
}

const char* to_string(ProberDomain p) {
  switch (p) {
    case ProberDomain::Target: return "target";
    case ProberDomain::Source: return "source";
    case ProberDomain::Both: return "both";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::Naive, Variant::Dann, Variant::Sml, Variant::Fa, Variant::Ne, Variant::Daml})
    if (name == to_string(v)) return v;
  throw ConfigError("unknown variant '" + name + "' (expected naive, dann, sml, fa, ne or daml)");
}

ProberDomain parse_prober_domain(const std::string& name) {
  for (auto p : {ProberDomain::Target, ProberDomain::Source, ProberDomain::Both})
    if (name == to_string(p)) return p;
  throw ConfigError("unknown prober domain '" + name + "' (expected target, source or both)");
}

void LossWeights::validate() const {
  if (!(eta >= 0.0) || !(lambda_d >= 0.0) || !(lambda_m >= 0.0))
    throw ConfigError("eta, lambda_d and lambda_m must be >= 0");
}

namespace {

std::vector<std::int64_t> as_ids(const std::vector<std::size_t>& rows) {
  return {rows.begin(), rows.end()};
}

Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t n = t.cols();
  Tensor out({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = t.at(rows[i], j);
  return out;
}

Var zero_loss() { return Var::constant(Tensor::scalar(0.0)); }

}  // namespace

Var cls_loss(const BatchOutputs& outputs) {
  const Tensor& probs = outputs.classifier.value();
  const std::size_t k = probs.cols();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < outputs.domains.size(); ++i) {
    if (outputs.domains[i] != 1) continue;
    if (!outputs.labels.at(i)) throw Error("cls_loss: source document " + std::to_string(i) + " has no label");
    rows.push_back(i);
  }
  if (rows.empty()) return zero_loss();
  Tensor one_hot({rows.size(), k});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int label = *outputs.labels[rows[r]];
    if (label < 1 || static_cast<std::size_t>(label) > k)
      throw Error("cls_loss: label " + std::to_string(label) + " outside 1.." + std::to_string(k));
    one_hot.at(r, static_cast<std::size_t>(label - 1)) = 1.0;
  }
  const Var picked = gather_rows(outputs.classifier, as_ids(rows));
  const double n = static_cast<double>(rows.size());
  return scale(sum(mul(Var::constant(std::move(one_hot)), log(picked))), -1.0 / n);
}

Var dom_loss(const BatchOutputs& outputs) {
  const Var& d = outputs.discriminator;
  const std::size_t n = d.value().rows();
  if (d.value().cols() != 1 || outputs.domains.size() != n)
    throw ShapeError("dom_loss: discriminator " + to_string(d.shape()) + " for " +
                     std::to_string(outputs.domains.size()) + " domain flags");
  Tensor z({n, 1}), not_z({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = outputs.domains[i] == 1 ? 1.0 : 0.0;
    not_z[i] = 1.0 - z[i];
  }
  const Var source_term = mul(Var::constant(std::move(z)), log(d));
  const Var target_term = mul(Var::constant(std::move(not_z)), log(affine(d, -1.0, 1.0)));
  return scale(sum(add(source_term, target_term)), -1.0 / static_cast<double>(n));
}

Var kl_loss(const Tensor& teacher, const Var& student) {
  if (teacher.shape() != student.shape())
    throw ShapeError("kl_loss: teacher " + to_string(teacher.shape()) + " vs student " + to_string(student.shape()));
  const double n = static_cast<double>(teacher.rows());
  double entropy_term = 0.0;  // sum t log t, with 0 log 0 = 0
  for (double t : teacher.data())
    if (t > 0.0) entropy_term += t * std::log(std::max(t, kLogFloor));
  const Var cross = sum(mul(Var::constant(teacher), log(student)));
  return affine(cross, -1.0 / n, entropy_term / n);
}

Var fa_loss(const Var& features, const Tensor& peer_features) {
  if (features.shape() != peer_features.shape())
    throw ShapeError("fa_loss: features " + to_string(features.shape()) + " vs " +
                     to_string(peer_features.shape()));
  const Var diff = sub(features, Var::constant(peer_features));
  return scale(sum(mul(diff, diff)), 1.0 / static_cast<double>(features.value().rows()));
}

std::vector<std::size_t> mutual_rows(const std::vector<int>& domains, ProberDomain routing) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    const bool source = domains[i] == 1;
    if (routing == ProberDomain::Both || (routing == ProberDomain::Source) == source) rows.push_back(i);
  }
  return rows;
}

ObjectiveTerms group_objective(Variant variant, const BatchOutputs& own, const PeerOutputs& peer,
                               const LossWeights& weights, ProberDomain routing) {
  weights.validate();
  ObjectiveTerms terms;
  terms.cls = cls_loss(own);
  terms.total = terms.cls;
  if (variant == Variant::Naive) return terms;

  terms.dom = dom_loss(own);
  if (weights.lambda_d > 0.0) terms.total = add(terms.total, scale(terms.dom, weights.lambda_d));
  if (variant == Variant::Dann || variant == Variant::Ne) return terms;

  if (variant == Variant::Fa) {
    terms.mutual = fa_loss(own.features, peer.features);
  } else {
    const Var& student = variant == Variant::Daml ? own.prober : own.classifier;
    if (!student) throw Error("group_objective: daml variant requires prober outputs");
    const auto rows = mutual_rows(own.domains, routing);
    if (rows.empty()) {
      terms.mutual = zero_loss();
    } else {
      terms.mutual = kl_loss(select_rows(peer.classifier, rows), gather_rows(student, as_ids(rows)));
    }
  }
  if (weights.lambda_m > 0.0) terms.total = add(terms.total, scale(terms.mutual, weights.lambda_m));
  return terms;
}

}  // namespace daml

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "daml/adam.hpp"
#include "daml/corpus.hpp"
#include "daml/nn.hpp"
#include "daml/objectives.hpp"

namespace daml {

/// One model group: extractor, classifier, discriminator and (for daml)
/// prober, each with its own Adam state. Ids start at 1.
struct Group {
  int id = 1;
  ExtractorParams extractor;
  HeadParams classifier;
  HeadParams discriminator;
  std::optional<HeadParams> prober;
  bool owns_embedding = true;

  AdamState extractor_adam, classifier_adam, discriminator_adam, prober_adam;

  std::vector<NamedParam> parameters() const;  // names prefixed "g<id>."
  std::vector<Var> extractor_params() const;
};

/// Group g draws its initial parameters from the named stream
/// "init-group-g" of the run seed. With `share_embeddings`, every group
/// uses group 1's embedding table.
std::vector<Group> init_groups(const ModelDims& dims, std::size_t count, bool with_prober, bool share_embeddings,
                               std::uint64_t seed, const AdamSettings& adam = {});

/// Forward pass of one group on a batch; the discriminator sees the
/// features through grad_reverse(., eta).
BatchOutputs forward_group(const Group& group, const Batch& batch, double eta);

/// Classifier distributions [N, K] without recording a graph.
Tensor classifier_probabilities(const Group& group, std::span<const Document> docs, std::size_t chunk = 64);
/// Document vectors [N, d] without recording a graph.
Tensor document_features(const Group& group, std::span<const Document> docs, std::size_t chunk = 64);

/// Row-wise argmax, as ratings 1..K. Ties go to the lower label.
std::vector<int> argmax_labels(const Tensor& probs);

/// Naive ensemble: sum of the groups' classifier distributions,
/// renormalized. Returns shape [K] for one document.
Tensor ne_predict(std::span<const Group> groups, const Document& doc);
Tensor ne_probabilities(std::span<const Group> groups, std::span<const Document> docs);

/// Group whose classifier has the highest accuracy on the labeled dev
/// documents; ties go to the lower id.
int select_model(std::span<const Group> groups, std::span<const Document> dev, int num_labels);
int select_by_accuracy(std::span<const double> accuracies);

}  // namespace daml

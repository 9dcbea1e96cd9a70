#include "daml/model.hpp"

#include <algorithm>
#include <string>

#include "daml/errors.hpp"
#include "daml/metrics.hpp"

namespace daml {

std::vector<NamedParam> Group::parameters() const {
  std::vector<NamedParam> out;
  const std::string prefix = "g" + std::to_string(id);
  extractor.collect(prefix + ".fe", out, owns_embedding);
  classifier.collect(prefix + ".cls", out);
  discriminator.collect(prefix + ".dis", out);
  if (prober) prober->collect(prefix + ".prb", out);
  return out;
}

std::vector<Var> Group::extractor_params() const {
  std::vector<NamedParam> named;
  extractor.collect("", named, owns_embedding);
  std::vector<Var> out;
  for (auto& p : named) out.push_back(p.var);
  return out;
}

std::vector<Group> init_groups(const ModelDims& dims, std::size_t count, bool with_prober, bool share_embeddings,
                               std::uint64_t seed, const AdamSettings& adam) {
  if (count == 0) throw Error("init_groups: need at least one group");
  std::vector<Group> groups;
  for (std::size_t g = 1; g <= count; ++g) {
    Rng rng(derive_seed(seed, "init-group-" + std::to_string(g)));
    Group group;
    group.id = static_cast<int>(g);
    group.extractor = ExtractorParams::init(dims, rng);
    const std::size_t d = dims.feature_dim();
    const double s = dims.init_scale;
    group.classifier =
        HeadParams::init(d, dims.head_hidden_dim(), dims.head_layers, dims.num_labels, HeadOutput::Softmax, s, rng);
    group.discriminator = HeadParams::init(d, dims.head_hidden_dim(), dims.head_layers, 1, HeadOutput::Sigmoid, s, rng);
    if (with_prober)
      group.prober =
          HeadParams::init(d, dims.head_hidden_dim(), dims.head_layers, dims.num_labels, HeadOutput::Softmax, s, rng);
    if (share_embeddings && g > 1) {
      group.extractor.embedding = groups.front().extractor.embedding;
      group.owns_embedding = false;
    }
    for (auto* state : {&group.extractor_adam, &group.classifier_adam, &group.discriminator_adam, &group.prober_adam})
      state->settings = adam;
    groups.push_back(std::move(group));
  }
  return groups;
}

BatchOutputs forward_group(const Group& group, const Batch& batch, double eta) {
  BatchOutputs out;
  out.features = extract(batch, group.extractor);
  out.classifier = head_forward(out.features, group.classifier);
  out.discriminator = head_forward(grad_reverse(out.features, eta), group.discriminator);
  if (group.prober) out.prober = head_forward(out.features, *group.prober);
  out.domains = batch.domains;
  out.labels = batch.labels;
  return out;
}

namespace {

template <class F>
Tensor stack_chunks(std::span<const Document> docs, std::size_t chunk, std::size_t cols, F f) {
  if (docs.empty()) throw Error("no documents to evaluate");
  Tensor out({docs.size(), cols});
  NoGradGuard guard;
  for (std::size_t start = 0; start < docs.size(); start += chunk) {
    const std::size_t end = std::min(docs.size(), start + chunk);
    const Batch batch = make_batch(std::vector<Document>(docs.begin() + start, docs.begin() + end));
    const Tensor part = f(batch);
    std::copy(part.data().begin(), part.data().end(), out.data().begin() + start * cols);
  }
  return out;
}

}  // namespace

Tensor classifier_probabilities(const Group& group, std::span<const Document> docs, std::size_t chunk) {
  const std::size_t k = group.classifier.biases.back().value().size();
  return stack_chunks(docs, chunk, k, [&](const Batch& b) {
    return head_forward(extract(b, group.extractor), group.classifier).value();
  });
}

Tensor document_features(const Group& group, std::span<const Document> docs, std::size_t chunk) {
  return stack_chunks(docs, chunk, group.extractor.output_dim(),
                      [&](const Batch& b) { return extract(b, group.extractor).value(); });
}

std::vector<int> argmax_labels(const Tensor& probs) {
  std::vector<int> labels;
  const std::size_t k = probs.cols();
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    labels.push_back(static_cast<int>(best) + 1);
  }
  return labels;
}

Tensor ne_probabilities(std::span<const Group> groups, std::span<const Document> docs) {
  if (groups.empty()) throw Error("ne_predict: no groups");
  Tensor total = classifier_probabilities(groups[0], docs);
  for (std::size_t g = 1; g < groups.size(); ++g) {
    const Tensor p = classifier_probabilities(groups[g], docs);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += p[i];
  }
  const std::size_t k = total.cols();
  for (std::size_t i = 0; i < total.rows(); ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += total.at(i, j);
    for (std::size_t j = 0; j < k; ++j) total.at(i, j) /= z;
  }
  return total;
}

Tensor ne_predict(std::span<const Group> groups, const Document& doc) {
  const Tensor probs = ne_probabilities(groups, std::span<const Document>(&doc, 1));
  return Tensor({probs.cols()}, std::vector<double>(probs.data().begin(), probs.data().end()));
}

int select_by_accuracy(std::span<const double> accuracies) {
  if (accuracies.empty()) throw Error("select_model: no groups");
  std::size_t best = 0;
  for (std::size_t g = 1; g < accuracies.size(); ++g)
    if (accuracies[g] > accuracies[best]) best = g;
  return static_cast<int>(best) + 1;
}

int select_model(std::span<const Group> groups, std::span<const Document> dev, int num_labels) {
  std::vector<double> accuracies;
  std::vector<int> truths;
  for (const auto& d : dev) {
    if (!d.label) throw Error("select_model: dev document " + d.id + " has no label");
    truths.push_back(*d.label);
  }
  for (const auto& g : groups)
    accuracies.push_back(evaluate(argmax_labels(classifier_probabilities(g, dev)), truths, num_labels).accuracy);
  return groups[static_cast<std::size_t>(select_by_accuracy(accuracies) - 1)].id;
}

}  // namespace daml

#include "daml/gradcheck_suite.hpp"

#include <functional>
#include <set>

#include "daml/model.hpp"
#include "daml/nn.hpp"
#include "daml/rng.hpp"

namespace daml {
namespace {

Var random_param(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return Var::parameter(std::move(t));
}

// Entries bounded away from zero, for ops with a kink or pole there.
Var signed_param(Shape shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.data()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.2, 1.0);
  return Var::parameter(std::move(t));
}

// Reduces a tensor to a scalar with fixed random weights so that no
// gradient is trivially zero (e.g. softmax rows always sum to one).
struct Projector {
  explicit Projector(Rng r) : rng(r) {}

  Rng rng;
  std::vector<Tensor> weights;
  std::size_t next = 0;

  Var operator()(const Var& v) {
    if (next == weights.size()) {
      Tensor w(v.value().shape());
      for (double& x : w.data()) x = rng.uniform(-1.0, 1.0);
      weights.push_back(std::move(w));
    }
    return sum(mul(v, Var::constant(weights[next++])));
  }
};

GradCheckCase check(const std::string& name, std::vector<NamedParam> params, std::uint64_t seed,
                    const std::function<Var(Projector&)>& body, const GradCheckOptions& options,
                    const OracleBuilder& oracle = nullptr) {
  Projector project(Rng(derive_seed(seed, "project-" + name)));
  auto build = [&] {
    project.next = 0;
    return body(project);
  };
  return {name, finite_diff_check(params, build, options, oracle)};
}

Document micro_doc(std::string id, std::vector<std::vector<std::int64_t>> sentences, std::optional<int> label,
                   Domain domain) {
  Document d;
  d.id = std::move(id);
  d.sentences = std::move(sentences);
  d.label = label;
  d.domain = domain;
  return d;
}

}  // namespace

std::vector<GradCheckCase> run_op_checks(const SuiteOptions& options) {
  const auto& opt = options.check;
  const std::uint64_t seed = options.seed;
  Rng rng(derive_seed(seed, "gradcheck-inputs"));
  std::vector<GradCheckCase> out;

  Var a = random_param({3, 4}, rng);
  Var b = random_param({4, 2}, rng);
  Var c = random_param({3, 4}, rng);
  Var bt = random_param({5, 4}, rng);
  Var w = random_param({2, 4}, rng);
  Var bias = random_param({2}, rng);
  Var row = random_param({4}, rng);
  Var col = random_param({3, 1}, rng);
  Var pos = random_param({3, 4}, rng, 0.5, 2.0);
  Var kinked = signed_param({3, 4}, rng);

  out.push_back(check("matmul", {{"a", a}, {"b", b}}, seed, [&](Projector& p) { return p(matmul(a, b)); }, opt));
  out.push_back(
      check("matmul_bt", {{"a", a}, {"b", bt}}, seed, [&](Projector& p) { return p(matmul_bt(a, bt)); }, opt));
  out.push_back(check("linear", {{"x", a}, {"weight", w}, {"bias", bias}}, seed,
                      [&](Projector& p) { return p(linear(a, w, bias)); }, opt));
  out.push_back(check("add", {{"a", a}, {"b", c}}, seed, [&](Projector& p) { return p(add(a, c)); }, opt));
  out.push_back(check("sub", {{"a", a}, {"b", c}}, seed, [&](Projector& p) { return p(sub(a, c)); }, opt));
  out.push_back(check("mul", {{"a", a}, {"b", c}}, seed, [&](Projector& p) { return p(mul(a, c)); }, opt));
  out.push_back(
      check("maximum", {{"a", kinked}}, seed, [&](Projector& p) { return p(maximum(kinked, 0.0)); }, opt));
  out.push_back(
      check("affine", {{"a", a}}, seed, [&](Projector& p) { return p(affine(a, -1.7, 0.3)); }, opt));
  out.push_back(check("scale", {{"a", a}}, seed, [&](Projector& p) { return p(scale(a, 2.5)); }, opt));
  out.push_back(
      check("add_row", {{"a", a}, {"row", row}}, seed, [&](Projector& p) { return p(add_row(a, row)); }, opt));
  out.push_back(
      check("mul_col", {{"a", a}, {"col", col}}, seed, [&](Projector& p) { return p(mul_col(a, col)); }, opt));
  out.push_back(check("tanh", {{"a", a}}, seed, [&](Projector& p) { return p(tanh(a)); }, opt));
  out.push_back(check("sigmoid", {{"a", a}}, seed, [&](Projector& p) { return p(sigmoid(a)); }, opt));
  out.push_back(check("exp", {{"a", a}}, seed, [&](Projector& p) { return p(exp(a)); }, opt));
  out.push_back(check("log", {{"a", pos}}, seed, [&](Projector& p) { return p(log(pos)); }, opt));
  out.push_back(check("softmax", {{"a", a}}, seed, [&](Projector& p) { return p(softmax(a)); }, opt));

  const Tensor mask = Tensor::matrix(3, 4, {1, 1, 0, 1, 1, 0, 0, 0, 1, 1, 1, 1});
  out.push_back(check("masked_softmax", {{"a", a}}, seed,
                      [&](Projector& p) { return p(masked_softmax(a, mask)); }, opt));
  out.push_back(check("sum", {{"a", a}}, seed, [&](Projector& p) { return p(sum(a)); }, opt));
  out.push_back(check("mean", {{"a", a}}, seed, [&](Projector& p) { return p(mean(a)); }, opt));
  out.push_back(check("concat_cols", {{"a", a}, {"b", c}, {"col", col}}, seed,
                      [&](Projector& p) {
                        const Var parts[] = {a, c, col};
                        return p(concat_cols(parts));
                      },
                      opt));

  const std::int64_t ids[] = {4, 0, 4, 2};
  out.push_back(check("gather_rows", {{"table", bt}}, seed,
                      [&](Projector& p) { return p(gather_rows(bt, ids)); }, opt));

  Var s0 = random_param({3, 4}, rng), s1 = random_param({3, 4}, rng), s2 = random_param({3, 4}, rng);
  Var alpha = random_param({3, 3}, rng);
  out.push_back(check("weighted_sum", {{"s0", s0}, {"s1", s1}, {"s2", s2}, {"alpha", alpha}}, seed,
                      [&](Projector& p) {
                        const Var states[] = {s0, s1, s2};
                        return p(weighted_sum(states, alpha));
                      },
                      opt));

  // The reversal layer's backward is -eta times the derivative of its
  // forward, so the oracle scales the plain projection.
  const double eta = 0.005;
  {
    Projector project(Rng(derive_seed(seed, "project-grad_reverse")));
    std::vector<NamedParam> params{{"x", a}};
    auto build = [&] {
      project.next = 0;
      return project(grad_reverse(a, eta));
    };
    auto oracle = [&](std::size_t) {
      project.next = 0;
      return scale(project(a), -eta);
    };
    out.push_back({"grad_reverse", finite_diff_check(params, build, opt, oracle)});
  }

  GruParams gru = GruParams::init(4, 3, 0.5, rng);
  Var h0 = random_param({3, 3}, rng);
  {
    std::vector<NamedParam> params{{"x", a}, {"h", h0}};
    gru.collect("gru", params);
    out.push_back(check("gru_step", params, seed, [&](Projector& p) { return p(gru_step(a, h0, gru)); }, opt));
  }

  GruParams back = GruParams::init(4, 3, 0.5, rng);
  const Tensor seq_mask = Tensor::matrix(3, 3, {1, 1, 1, 1, 1, 0, 1, 0, 0});
  {
    std::vector<NamedParam> params{{"x0", s0}, {"x1", s1}, {"x2", s2}};
    gru.collect("forward", params);
    back.collect("backward", params);
    out.push_back(check("bigru_encode", params, seed,
                        [&](Projector& p) {
                          const Var xs[] = {s0, s1, s2};
                          auto hs = bigru_encode(xs, gru, back, seq_mask);
                          return p(concat_cols(hs));
                        },
                        opt));
  }

  AttentionParams att = AttentionParams::init(4, 3, 0.5, rng);
  {
    std::vector<NamedParam> params{{"x0", s0}, {"x1", s1}, {"x2", s2}};
    att.collect("attention", params);
    out.push_back(check("attention_pool", params, seed,
                        [&](Projector& p) {
                          const Var xs[] = {s0, s1, s2};
                          return p(attention_pool(xs, att, seq_mask).pooled);
                        },
                        opt));
  }

  HeadParams head = HeadParams::init(4, 3, 2, 5, HeadOutput::Softmax, 0.5, rng);
  HeadParams sig = HeadParams::init(4, 3, 1, 1, HeadOutput::Sigmoid, 0.5, rng);
  {
    std::vector<NamedParam> params{{"x", a}};
    head.collect("head", params);
    out.push_back(
        check("head_softmax", params, seed, [&](Projector& p) { return p(head_forward(a, head)); }, opt));
    std::vector<NamedParam> sparams{{"x", a}};
    sig.collect("head", sparams);
    out.push_back(
        check("head_sigmoid", sparams, seed, [&](Projector& p) { return p(head_forward(a, sig)); }, opt));
  }

  ModelDims dims;
  dims.vocab_size = 10;
  dims.embed_dim = dims.word_hidden = dims.sentence_hidden = 3;
  dims.init_scale = 0.5;
  ExtractorParams fe = ExtractorParams::init(dims, rng);
  Batch batch = make_batch({micro_doc("s", {{2, 3, 4}, {5, 6}}, 4, Domain::Source),
                            micro_doc("t", {{7, 8, 9, 1}}, std::nullopt, Domain::Target)});
  {
    std::vector<NamedParam> params;
    fe.collect("fe", params);
    out.push_back(check("extract", params, seed, [&](Projector& p) { return p(extract(batch, fe)); }, opt));
  }

  // Losses on head outputs of a fixed-input batch.
  BatchOutputs outs;
  outs.domains = {1, 0, 1};
  outs.labels = {2, std::nullopt, 5};
  Var logits = random_param({3, 5}, rng);
  Var dlogit = random_param({3, 1}, rng);
  auto fill_outputs = [&] {
    outs.features = a;
    outs.classifier = softmax(logits);
    outs.prober = outs.classifier;
    outs.discriminator = sigmoid(dlogit);
  };
  out.push_back(check("cls_loss", {{"logits", logits}}, seed,
                      [&](Projector&) {
                        fill_outputs();
                        return cls_loss(outs);
                      },
                      opt));
  out.push_back(check("dom_loss", {{"logits", dlogit}}, seed,
                      [&](Projector&) {
                        fill_outputs();
                        return dom_loss(outs);
                      },
                      opt));
  Tensor teacher({3, 5});
  for (std::size_t r = 0; r < 3; ++r) {
    double total = 0.0;
    for (std::size_t k = 0; k < 5; ++k) total += (teacher.at(r, k) = rng.uniform(0.1, 1.0));
    for (std::size_t k = 0; k < 5; ++k) teacher.at(r, k) /= total;
  }
  out.push_back(check("kl_loss", {{"logits", logits}}, seed,
                      [&](Projector&) { return kl_loss(teacher, softmax(logits)); }, opt));
  const Tensor peer_features = c.value();
  out.push_back(
      check("fa_loss", {{"features", a}}, seed, [&](Projector&) { return fa_loss(a, peer_features); }, opt));
  return out;
}

GradCheckCase run_objective_check(Variant variant, const SuiteOptions& options) {
  ModelDims dims;
  dims.vocab_size = 10;
  dims.embed_dim = dims.word_hidden = dims.sentence_hidden = 3;
  dims.head_hidden = 3;
  dims.init_scale = 0.5;
  const std::size_t count = variant == Variant::Naive || variant == Variant::Dann ? 1 : 2;
  auto groups = init_groups(dims, count, variant == Variant::Daml, false, options.seed);
  Batch batch = make_batch({micro_doc("s", {{2, 3, 4}, {5, 6}}, 4, Domain::Source),
                            micro_doc("t", {{7, 8, 9}, {1, 3}}, std::nullopt, Domain::Target)});
  const LossWeights weights;

  PeerOutputs peer;
  if (count > 1) {
    NoGradGuard guard;
    auto outs = forward_group(groups[1], batch, weights.eta);
    peer.classifier = outs.classifier.value();
    peer.features = outs.features.value();
  } else {
    peer.classifier = Tensor({batch.size(), dims.num_labels}, 1.0 / static_cast<double>(dims.num_labels));
    peer.features = Tensor({batch.size(), dims.feature_dim()}, 0.0);
  }

  const Group& g = groups[0];
  auto params = g.parameters();
  std::set<const Node*> extractor;
  for (const Var& v : g.extractor_params()) extractor.insert(v.node().get());

  auto terms = [&] {
    return group_objective(variant, forward_group(g, batch, weights.eta), peer, weights);
  };
  auto build = [&] { return terms().total; };
  auto oracle = [&](std::size_t i) {
    ObjectiveTerms t = terms();
    if (!extractor.contains(params[i].var.node().get())) return t.total;
    Var total = t.cls;
    if (t.dom && weights.lambda_d > 0.0) total = add(total, scale(t.dom, -weights.eta * weights.lambda_d));
    if (t.mutual && weights.lambda_m > 0.0) total = add(total, scale(t.mutual, weights.lambda_m));
    return total;
  };
  return {std::string("objective_") + to_string(variant), finite_diff_check(params, build, options.check, oracle)};
}

std::vector<GradCheckCase> run_gradcheck_suite(const SuiteOptions& options) {
  auto out = run_op_checks(options);
  for (Variant v : {Variant::Naive, Variant::Dann, Variant::Sml, Variant::Fa, Variant::Daml})
    out.push_back(run_objective_check(v, options));
  return out;
}

}  // namespace daml

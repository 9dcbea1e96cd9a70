#include "daml/nn.hpp"

#include <fstream>
#include <sstream>

#include "daml/errors.hpp"

namespace daml {

Tensor uniform_tensor(Shape shape, double scale, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

EmbeddingTable EmbeddingTable::init(std::size_t vocab, std::size_t dim, double scale, Rng& rng) {
  return {Var::parameter(uniform_tensor({vocab, dim}, scale, rng))};
}

std::size_t load_embeddings(const std::filesystem::path& path, const Vocab& vocab, EmbeddingTable& table) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  const std::size_t dim = table.dim();
  auto& weights = table.weights.mutable_value();
  std::size_t loaded = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> row;
    double v;
    while (fields >> v) row.push_back(v);
    if (!fields.eof()) throw ParseError("non-numeric embedding component", line_no);
    if (row.size() != dim)
      throw ParseError("expected " + std::to_string(dim) + " components, got " + std::to_string(row.size()),
                       line_no);
    const auto id = vocab.id(token);
    if (id == Vocab::kUnk && token != "<unk>") continue;
    for (std::size_t j = 0; j < dim; ++j) weights.at(static_cast<std::size_t>(id), j) = row[j];
    ++loaded;
  }
  return loaded;
}

GruParams GruParams::init(std::size_t input_dim, std::size_t hidden_dim, double scale, Rng& rng) {
  const Shape w{hidden_dim, input_dim + hidden_dim};
  const Shape b{hidden_dim};
  GruParams p;
  p.w_update = Var::parameter(uniform_tensor(w, scale, rng));
  p.b_update = Var::parameter(uniform_tensor(b, scale, rng));
  p.w_reset = Var::parameter(uniform_tensor(w, scale, rng));
  p.b_reset = Var::parameter(uniform_tensor(b, scale, rng));
  p.w_candidate = Var::parameter(uniform_tensor(w, scale, rng));
  p.b_candidate = Var::parameter(uniform_tensor(b, scale, rng));
  return p;
}

void GruParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".w_update", w_update});
  out.push_back({prefix + ".b_update", b_update});
  out.push_back({prefix + ".w_reset", w_reset});
  out.push_back({prefix + ".b_reset", b_reset});
  out.push_back({prefix + ".w_candidate", w_candidate});
  out.push_back({prefix + ".b_candidate", b_candidate});
}

AttentionParams AttentionParams::init(std::size_t input_dim, std::size_t proj_dim, double scale, Rng& rng) {
  if (proj_dim == 0) throw Error("attention projection dimension must be positive");
  AttentionParams p;
  p.weight = Var::parameter(uniform_tensor({proj_dim, input_dim}, scale, rng));
  p.bias = Var::parameter(uniform_tensor({proj_dim}, scale, rng));
  p.context = Var::parameter(uniform_tensor({1, proj_dim}, scale, rng));
  return p;
}

void AttentionParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
  out.push_back({prefix + ".context", context});
}

ExtractorParams ExtractorParams::init(const ModelDims& dims, Rng& rng) {
  const double s = dims.init_scale;
  ExtractorParams p;
  p.embedding = EmbeddingTable::init(dims.vocab_size, dims.embed_dim, s, rng);
  p.word_forward = GruParams::init(dims.embed_dim, dims.word_hidden, s, rng);
  p.word_backward = GruParams::init(dims.embed_dim, dims.word_hidden, s, rng);
  p.word_attention = AttentionParams::init(2 * dims.word_hidden, dims.word_attention_dim(), s, rng);
  p.sentence_forward = GruParams::init(2 * dims.word_hidden, dims.sentence_hidden, s, rng);
  p.sentence_backward = GruParams::init(2 * dims.word_hidden, dims.sentence_hidden, s, rng);
  p.sentence_attention = AttentionParams::init(2 * dims.sentence_hidden, dims.sentence_attention_dim(), s, rng);
  return p;
}

void ExtractorParams::collect(const std::string& prefix, std::vector<NamedParam>& out, bool include_embedding) const {
  if (include_embedding) out.push_back({prefix + ".embedding", embedding.weights});
  word_forward.collect(prefix + ".word_forward", out);
  word_backward.collect(prefix + ".word_backward", out);
  word_attention.collect(prefix + ".word_attention", out);
  sentence_forward.collect(prefix + ".sentence_forward", out);
  sentence_backward.collect(prefix + ".sentence_backward", out);
  sentence_attention.collect(prefix + ".sentence_attention", out);
}

HeadParams HeadParams::init(std::size_t input_dim, std::size_t hidden_dim, std::size_t hidden_layers,
                            std::size_t output_dim, HeadOutput output, double scale, Rng& rng) {
  HeadParams p;
  p.output = output;
  std::size_t in = input_dim;
  for (std::size_t l = 0; l <= hidden_layers; ++l) {
    const std::size_t out = l == hidden_layers ? output_dim : hidden_dim;
    p.weights.push_back(Var::parameter(uniform_tensor({out, in}, scale, rng)));
    p.biases.push_back(Var::parameter(uniform_tensor({out}, scale, rng)));
    in = out;
  }
  return p;
}

void HeadParams::collect(const std::string& prefix, std::vector<NamedParam>& out) const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back({prefix + ".layer" + std::to_string(l) + ".weight", weights[l]});
    out.push_back({prefix + ".layer" + std::to_string(l) + ".bias", biases[l]});
  }
}

Var gru_step(const Var& x, const Var& h, const GruParams& p) {
  const Var xh_parts[] = {x, h};
  const Var xh = concat_cols(xh_parts);
  const Var update = sigmoid(linear(xh, p.w_update, p.b_update));
  const Var reset = sigmoid(linear(xh, p.w_reset, p.b_reset));
  const Var xrh_parts[] = {x, mul(reset, h)};
  const Var candidate = tanh(linear(concat_cols(xrh_parts), p.w_candidate, p.b_candidate));
  // (1 - z) * n + z * h
  return add(candidate, mul(update, sub(h, candidate)));
}

namespace {

Var mask_column(const Tensor& mask, std::size_t step, bool inverted) {
  const std::size_t rows = mask.rows(), steps = mask.cols();
  Tensor col({rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    const double m = mask[r * steps + step] != 0.0 ? 1.0 : 0.0;
    col[r] = inverted ? 1.0 - m : m;
  }
  return Var::constant(std::move(col));
}

std::vector<Var> run_direction(std::span<const Var> inputs, const GruParams& p, const Tensor& mask, bool reverse) {
  const std::size_t steps = inputs.size();
  const std::size_t rows = inputs[0].value().rows();
  std::vector<Var> states(steps);
  Var h = Var::constant(Tensor({rows, p.hidden_dim()}));
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t k = reverse ? steps - 1 - i : i;
    const Var next = gru_step(inputs[k], h, p);
    h = add(mul_col(next, mask_column(mask, k, false)), mul_col(h, mask_column(mask, k, true)));
    states[k] = h;
  }
  return states;
}

}  // namespace

std::vector<Var> bigru_encode(std::span<const Var> inputs, const GruParams& forward, const GruParams& backward,
                              const Tensor& mask) {
  if (inputs.empty()) throw Error("bigru_encode: empty sequence");
  if (mask.cols() != inputs.size() || mask.rows() != inputs[0].value().rows())
    throw ShapeError("bigru_encode: mask " + to_string(mask.shape()) + " for " + std::to_string(inputs.size()) +
                     " steps of " + to_string(inputs[0].shape()));
  const auto fwd = run_direction(inputs, forward, mask, false);
  const auto bwd = run_direction(inputs, backward, mask, true);
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Var parts[] = {fwd[k], bwd[k]};
    out.push_back(concat_cols(parts));
  }
  return out;
}

AttentionResult attention_pool(std::span<const Var> states, const AttentionParams& params, const Tensor& mask) {
  if (states.empty()) throw Error("attention_pool: empty sequence");
  if (mask.cols() != states.size() || mask.rows() != states[0].value().rows())
    throw ShapeError("attention_pool: mask " + to_string(mask.shape()) + " for " + std::to_string(states.size()) +
                     " states of " + to_string(states[0].shape()));
  std::vector<Var> scores;
  scores.reserve(states.size());
  for (const auto& h : states)
    scores.push_back(matmul_bt(tanh(linear(h, params.weight, params.bias)), params.context));
  const Var weights = masked_softmax(concat_cols(scores), mask);
  return {weighted_sum(states, weights), weights};
}

Var extract(const Batch& batch, const ExtractorParams& params) {
  const std::size_t docs = batch.size();
  if (docs == 0) throw Error("extract: empty batch");
  const std::size_t max_s = batch.max_sentences, max_w = batch.max_words;

  // Word level: one row per real sentence.
  std::vector<std::size_t> row_of(docs * max_s, 0);
  std::vector<std::pair<std::size_t, std::size_t>> sentences;
  for (std::size_t i = 0; i < docs; ++i)
    for (std::size_t j = 0; j < max_s; ++j)
      if (batch.sentence_mask[i * max_s + j]) {
        row_of[i * max_s + j] = sentences.size();
        sentences.emplace_back(i, j);
      }
  const std::size_t rows = sentences.size();
  Tensor word_mask({rows, max_w});
  std::vector<Var> embedded;
  embedded.reserve(max_w);
  std::vector<std::int64_t> ids(rows);
  for (std::size_t k = 0; k < max_w; ++k) {
    for (std::size_t r = 0; r < rows; ++r) {
      const auto [i, j] = sentences[r];
      ids[r] = batch.token_ids[batch.index(i, j, k)];
      word_mask[r * max_w + k] = batch.word_mask[batch.index(i, j, k)];
    }
    embedded.push_back(gather_rows(params.embedding.weights, ids));
  }
  const auto word_states = bigru_encode(embedded, params.word_forward, params.word_backward, word_mask);
  const Var sentence_vectors = attention_pool(word_states, params.word_attention, word_mask).pooled;

  // Sentence level: one row per document.
  Tensor sentence_mask({docs, max_s});
  std::vector<Var> sentence_inputs;
  sentence_inputs.reserve(max_s);
  std::vector<std::int64_t> picks(docs);
  for (std::size_t j = 0; j < max_s; ++j) {
    for (std::size_t i = 0; i < docs; ++i) {
      picks[i] = static_cast<std::int64_t>(row_of[i * max_s + j]);
      sentence_mask[i * max_s + j] = batch.sentence_mask[i * max_s + j];
    }
    sentence_inputs.push_back(gather_rows(sentence_vectors, picks));
  }
  const auto sentence_states =
      bigru_encode(sentence_inputs, params.sentence_forward, params.sentence_backward, sentence_mask);
  return attention_pool(sentence_states, params.sentence_attention, sentence_mask).pooled;
}

Var extract(const Document& doc, const ExtractorParams& params) { return extract(make_batch({doc}), params); }

Var head_forward(const Var& d, const HeadParams& params) {
  if (d.value().cols() != params.input_dim())
    throw ShapeError("head_forward: input dim " + std::to_string(d.value().cols()) + ", head expects " +
                     std::to_string(params.input_dim()));
  Var x = d;
  const std::size_t last = params.weights.size() - 1;
  for (std::size_t l = 0; l < last; ++l) x = tanh(linear(x, params.weights[l], params.biases[l]));
  const Var logits = linear(x, params.weights[last], params.biases[last]);
  return params.output == HeadOutput::Softmax ? softmax(logits) : sigmoid(logits);
}

}  // namespace daml

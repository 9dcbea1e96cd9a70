#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "daml/autodiff.hpp"
#include "daml/corpus.hpp"
#include "daml/gradcheck.hpp"
#include "daml/rng.hpp"

namespace daml {

/// Architecture hyperparameters shared by every group.
struct ModelDims {
  std::size_t vocab_size = 2;
  std::size_t embed_dim = 16;
  std::size_t word_hidden = 16;
  std::size_t sentence_hidden = 16;
  std::size_t word_attention = 0;      // 0 -> 2 * word_hidden
  std::size_t sentence_attention = 0;  // 0 -> 2 * sentence_hidden
  std::size_t head_layers = 1;         // hidden layers before the output layer
  std::size_t head_hidden = 0;         // 0 -> 2 * sentence_hidden
  std::size_t num_labels = 5;
  double init_scale = 0.1;

  std::size_t feature_dim() const { return 2 * sentence_hidden; }
  std::size_t word_attention_dim() const { return word_attention ? word_attention : 2 * word_hidden; }
  std::size_t sentence_attention_dim() const {
    return sentence_attention ? sentence_attention : 2 * sentence_hidden;
  }
  std::size_t head_hidden_dim() const { return head_hidden ? head_hidden : 2 * sentence_hidden; }
};

Tensor uniform_tensor(Shape shape, double scale, Rng& rng);

struct EmbeddingTable {
  Var weights;  // [vocab, embed]

  static EmbeddingTable init(std::size_t vocab, std::size_t dim, double scale, Rng& rng);
  std::size_t vocab_size() const { return weights.value().rows(); }
  std::size_t dim() const { return weights.value().cols(); }
};

/// Reads `token v1 ... vE` lines into the rows of known tokens. Tokens
/// absent from the vocabulary are skipped; rows without a line keep their
/// initial values. Returns the number of rows overwritten.
std::size_t load_embeddings(const std::filesystem::path& path, const Vocab& vocab, EmbeddingTable& table);

/// Gate weights act on [x, h] and are shaped [hidden, input + hidden].
struct GruParams {
  Var w_update, b_update;
  Var w_reset, b_reset;
  Var w_candidate, b_candidate;

  static GruParams init(std::size_t input_dim, std::size_t hidden_dim, double scale, Rng& rng);
  std::size_t hidden_dim() const { return b_update.value().size(); }
  std::size_t input_dim() const { return w_update.value().cols() - hidden_dim(); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct AttentionParams {
  Var weight;   // [proj, input]
  Var bias;     // [proj]
  Var context;  // [1, proj]

  static AttentionParams init(std::size_t input_dim, std::size_t proj_dim, double scale, Rng& rng);
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct ExtractorParams {
  EmbeddingTable embedding;
  GruParams word_forward, word_backward;
  AttentionParams word_attention;
  GruParams sentence_forward, sentence_backward;
  AttentionParams sentence_attention;

  static ExtractorParams init(const ModelDims& dims, Rng& rng);
  std::size_t output_dim() const { return 2 * sentence_forward.hidden_dim(); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out, bool include_embedding = true) const;
};

enum class HeadOutput { Softmax, Sigmoid };

/// Multilayer perceptron: tanh hidden layers, then softmax (classifier,
/// prober) or sigmoid (discriminator).
struct HeadParams {
  std::vector<Var> weights;  // [out, in] per layer
  std::vector<Var> biases;
  HeadOutput output = HeadOutput::Softmax;

  static HeadParams init(std::size_t input_dim, std::size_t hidden_dim, std::size_t hidden_layers,
                         std::size_t output_dim, HeadOutput output, double scale, Rng& rng);
  std::size_t input_dim() const { return weights.front().value().cols(); }
  void collect(const std::string& prefix, std::vector<NamedParam>& out) const;
};

/// One GRU step on a batch of rows: x [R, in], h [R, hidden] -> [R, hidden].
Var gru_step(const Var& x, const Var& h, const GruParams& p);

/// Bidirectional GRU over T inputs of shape [R, in]. `mask` is [R, T];
/// masked steps carry the previous state through unchanged. Returns T
/// outputs of shape [R, 2 * hidden]: [forward_k, backward_k].
std::vector<Var> bigru_encode(std::span<const Var> inputs, const GruParams& forward, const GruParams& backward,
                              const Tensor& mask);

struct AttentionResult {
  Var pooled;   // [R, input]
  Var weights;  // [R, T]
};

/// Masked additive attention: weights = masked_softmax(context . tanh(W h_k + b)).
AttentionResult attention_pool(std::span<const Var> states, const AttentionParams& params, const Tensor& mask);

/// Hierarchical encoder: word BiGRU + attention per sentence, then sentence
/// BiGRU + attention per document. Returns [batch, 2 * sentence_hidden].
Var extract(const Batch& batch, const ExtractorParams& params);
Var extract(const Document& doc, const ExtractorParams& params);

/// d [B, in] -> [B, out].
Var head_forward(const Var& d, const HeadParams& params);

}  // namespace daml

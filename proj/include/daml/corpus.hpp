#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace daml {

/// Domain flag z: 1 for the labeled source domain, 0 for the target domain.
enum class Domain : int { Target = 0, Source = 1 };

inline int domain_flag(Domain d) { return static_cast<int>(d); }

/// A document before vocabulary lookup: sentences of lowercase tokens.
struct TextDocument {
  std::string id;
  std::vector<std::vector<std::string>> sentences;
  std::optional<int> label;
};

struct Document {
  std::string id;
  std::vector<std::vector<std::int64_t>> sentences;
  std::optional<int> label;  // rating in 1..K
  Domain domain = Domain::Source;

  std::size_t token_count() const;
};

class Vocab {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;

  Vocab();
  /// Tokens with frequency >= min_count across the corpora, in order of
  /// first appearance.
  static Vocab build(std::span<const std::vector<TextDocument>* const> corpora, std::size_t min_count = 1);
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::int64_t id(const std::string& token) const;
  const std::string& token(std::int64_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> index_;
};

/// Splits one text field into sentences on [.!?], lowercases and splits on
/// whitespace. Empty sentences are dropped.
std::vector<std::vector<std::string>> tokenize_sentences(const std::string& text);

/// Reads the tab-separated corpus format: `label<TAB>sentence<TAB>...`, with
/// `-` as the label of unlabeled documents. Document ids are
/// `<id_prefix>:<line>`.
std::vector<TextDocument> read_text_corpus(const std::filesystem::path& path, int num_labels,
                                           const std::string& id_prefix = "");
void write_text_corpus(const std::filesystem::path& path, std::span<const TextDocument> docs);

Document encode(const TextDocument& doc, const Vocab& vocab, Domain domain);
std::vector<Document> encode_all(std::span<const TextDocument> docs, const Vocab& vocab, Domain domain);

std::vector<Document> parse_corpus(const std::filesystem::path& path, const Vocab& vocab, Domain domain,
                                   int num_labels);

/// Maps a 10-point rating onto the 5-point scale: ceil(label / 2).
int align_labels(int label);

/// A padded mini-batch. Token ids are laid out [doc][sentence][word] with
/// padding id 0; masks mark real tokens and sentences.
struct Batch {
  std::vector<Document> docs;
  std::size_t max_sentences = 0;
  std::size_t max_words = 0;
  std::vector<std::int64_t> token_ids;
  std::vector<std::uint8_t> word_mask;
  std::vector<std::uint8_t> sentence_mask;
  std::vector<std::optional<int>> labels;
  std::vector<int> domains;

  std::size_t size() const noexcept { return docs.size(); }
  std::size_t index(std::size_t doc, std::size_t sentence, std::size_t word) const {
    return (doc * max_sentences + sentence) * max_words + word;
  }
};

Batch make_batch(std::vector<Document> docs);

enum class MixPolicy {
  HalfHalf,    // batch_size/2 source + batch_size/2 target per batch
  Sequential,  // documents in input order, no domain balancing
};

/// Under HalfHalf the longer domain stream is consumed once in shuffled
/// order; the shorter one is recycled, reshuffling on each pass. Batch count
/// is ceil(max(n_source, n_target) / (batch_size/2)), and the longer stream
/// only wraps inside the final batch when its size is not a multiple.
std::vector<Batch> make_batches(std::span<const Document> docs, std::size_t batch_size, std::uint64_t seed,
                                MixPolicy mix);

}  // namespace daml

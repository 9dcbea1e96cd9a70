#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "daml/config.hpp"
#include "daml/corpus.hpp"

namespace daml {

/// Parameters of the two-domain synthetic review generator.
///
/// Each lexicon (pivot, source-private, target-private) is split evenly
/// into positive and negative words. A document's rating is drawn first;
/// each word slot then carries a sentiment word with probability
/// sentiment_rate * |rating - mid| / (mid - 1), so extreme ratings carry
/// the most sentiment words and the middle rating none.
struct SynthSpec {
  int num_labels = 5;
  std::size_t pivot_size = 40;
  std::size_t private_size = 40;
  std::size_t neutral_size = 200;
  std::size_t train_docs = 2000;
  std::size_t dev_docs = 250;
  std::size_t test_docs = 250;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 6;
  std::size_t min_words = 5;
  std::size_t max_words = 10;
  double sentiment_rate = 0.8;
  double p_priv = 0.8;
  double noise = 0.05;
  std::uint64_t seed = 7;

  void validate() const;
};

SynthSpec synth_spec_from(const KeyValues& values);
KeyValues to_key_values(const SynthSpec& spec);

struct Lexicons {
  std::vector<std::string> pivot_positive, pivot_negative;
  std::vector<std::string> source_positive, source_negative;
  std::vector<std::string> target_positive, target_negative;
  std::vector<std::string> neutral;
};

Lexicons make_lexicons(const SynthSpec& spec);

enum class Split { Train = 0, Dev = 1, Test = 2 };
inline constexpr std::array<const char*, 3> kSplitNames{"train", "dev", "test"};

struct SyntheticCorpus {
  Lexicons lexicons;
  std::array<std::vector<TextDocument>, 3> source;
  std::array<std::vector<TextDocument>, 3> target;
};

SyntheticCorpus gen_synthetic(const SynthSpec& spec);

/// Corpus file name for a domain/split pair, e.g. "target_dev.tsv".
std::string corpus_file_name(Domain domain, Split split);

/// Writes the six corpus files and lexicons.txt. Target training documents
/// are written unlabeled. Returns the written paths.
std::vector<std::filesystem::path> write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir);

}  // namespace daml

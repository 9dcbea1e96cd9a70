#include "daml/synth.hpp"

#include <cmath>
#include <fstream>

#include "daml/errors.hpp"
#include "daml/rng.hpp"

namespace daml {

void SynthSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid synthetic spec: " + msg); };
  if (num_labels < 2) fail("num_labels must be >= 2");
  if (pivot_size < 2 || pivot_size % 2) fail("pivot_size must be even and >= 2");
  if (private_size < 2 || private_size % 2) fail("private_size must be even and >= 2");
  if (neutral_size == 0) fail("neutral_size must be positive");
  if (train_docs == 0 || dev_docs == 0 || test_docs == 0) fail("docs per split must be positive");
  if (min_sentences == 0 || min_sentences > max_sentences) fail("sentence count range is empty");
  if (min_words == 0 || min_words > max_words) fail("sentence length range is empty");
  if (!(sentiment_rate >= 0.0 && sentiment_rate <= 1.0)) fail("sentiment_rate must be in [0,1]");
  if (!(p_priv >= 0.0 && p_priv <= 1.0)) fail("p_priv must be in [0,1]");
  if (!(noise >= 0.0 && noise <= 1.0)) fail("noise must be in [0,1]");
}

SynthSpec synth_spec_from(const KeyValues& values) {
  SynthSpec s;
  ConfigBinder b(values);
  b.bind("num_labels", s.num_labels);
  b.bind("pivot_size", s.pivot_size);
  b.bind("private_size", s.private_size);
  b.bind("neutral_size", s.neutral_size);
  b.bind("train_docs", s.train_docs);
  b.bind("dev_docs", s.dev_docs);
  b.bind("test_docs", s.test_docs);
  b.bind("min_sentences", s.min_sentences);
  b.bind("max_sentences", s.max_sentences);
  b.bind("min_words", s.min_words);
  b.bind("max_words", s.max_words);
  b.bind("sentiment_rate", s.sentiment_rate);
  b.bind("p_priv", s.p_priv);
  b.bind("noise", s.noise);
  b.bind("seed", s.seed);
  b.finish();
  s.validate();
  return s;
}

KeyValues to_key_values(const SynthSpec& s) {
  return {
      {"num_labels", std::to_string(s.num_labels)},
      {"pivot_size", std::to_string(s.pivot_size)},
      {"private_size", std::to_string(s.private_size)},
      {"neutral_size", std::to_string(s.neutral_size)},
      {"train_docs", std::to_string(s.train_docs)},
      {"dev_docs", std::to_string(s.dev_docs)},
      {"test_docs", std::to_string(s.test_docs)},
      {"min_sentences", std::to_string(s.min_sentences)},
      {"max_sentences", std::to_string(s.max_sentences)},
      {"min_words", std::to_string(s.min_words)},
      {"max_words", std::to_string(s.max_words)},
      {"sentiment_rate", format_double(s.sentiment_rate)},
      {"p_priv", format_double(s.p_priv)},
      {"noise", format_double(s.noise)},
      {"seed", std::to_string(s.seed)},
  };
}

Lexicons make_lexicons(const SynthSpec& spec) {
  Lexicons lex;
  auto fill = [](std::vector<std::string>& out, const std::string& stem, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
  };
  fill(lex.pivot_positive, "pivpos", spec.pivot_size / 2);
  fill(lex.pivot_negative, "pivneg", spec.pivot_size / 2);
  fill(lex.source_positive, "srcpos", spec.private_size / 2);
  fill(lex.source_negative, "srcneg", spec.private_size / 2);
  fill(lex.target_positive, "tgtpos", spec.private_size / 2);
  fill(lex.target_negative, "tgtneg", spec.private_size / 2);
  fill(lex.neutral, "w", spec.neutral_size);
  return lex;
}

namespace {

TextDocument make_document(const SynthSpec& spec, const Lexicons& lex, Domain domain, Rng& rng) {
  const int rating = static_cast<int>(rng.between(1, spec.num_labels));
  const double mid = (spec.num_labels + 1) / 2.0;
  const double intensity = std::abs(rating - mid) / (mid - 1.0);
  const bool positive = rating > mid;
  const double sentiment_prob = spec.sentiment_rate * intensity;

  const auto& private_pos = domain == Domain::Source ? lex.source_positive : lex.target_positive;
  const auto& private_neg = domain == Domain::Source ? lex.source_negative : lex.target_negative;
  auto pick = [&rng](const std::vector<std::string>& words) -> const std::string& {
    return words[rng.below(words.size())];
  };

  TextDocument doc;
  doc.label = rating;
  const auto sentences = rng.between(static_cast<std::int64_t>(spec.min_sentences),
                                     static_cast<std::int64_t>(spec.max_sentences));
  for (std::int64_t s = 0; s < sentences; ++s) {
    auto& sentence = doc.sentences.emplace_back();
    const auto words =
        rng.between(static_cast<std::int64_t>(spec.min_words), static_cast<std::int64_t>(spec.max_words));
    for (std::int64_t w = 0; w < words; ++w) {
      if (sentiment_prob > 0.0 && rng.bernoulli(sentiment_prob)) {
        const bool polarity = rng.bernoulli(spec.noise) ? !positive : positive;
        const bool use_private = rng.bernoulli(spec.p_priv);
        const auto& words_for = use_private ? (polarity ? private_pos : private_neg)
                                            : (polarity ? lex.pivot_positive : lex.pivot_negative);
        sentence.push_back(pick(words_for));
      } else {
        sentence.push_back(pick(lex.neutral));
      }
    }
  }
  return doc;
}

}  // namespace

SyntheticCorpus gen_synthetic(const SynthSpec& spec) {
  spec.validate();
  SyntheticCorpus corpus;
  corpus.lexicons = make_lexicons(spec);
  const std::array<std::size_t, 3> sizes{spec.train_docs, spec.dev_docs, spec.test_docs};
  for (Domain domain : {Domain::Source, Domain::Target}) {
    auto& splits = domain == Domain::Source ? corpus.source : corpus.target;
    for (std::size_t split = 0; split < 3; ++split) {
      const std::string stream = std::string(domain == Domain::Source ? "source_" : "target_") + kSplitNames[split];
      Rng rng(derive_seed(spec.seed, "synth-" + stream));
      for (std::size_t i = 0; i < sizes[split]; ++i) {
        auto doc = make_document(spec, corpus.lexicons, domain, rng);
        doc.id = stream + ":" + std::to_string(i + 1);
        splits[split].push_back(std::move(doc));
      }
    }
  }
  return corpus;
}

std::string corpus_file_name(Domain domain, Split split) {
  return std::string(domain == Domain::Source ? "source_" : "target_") + kSplitNames[static_cast<int>(split)] +
         ".tsv";
}

std::vector<std::filesystem::path> write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (Domain domain : {Domain::Source, Domain::Target}) {
    const auto& splits = domain == Domain::Source ? corpus.source : corpus.target;
    for (int split = 0; split < 3; ++split) {
      const auto path = dir / corpus_file_name(domain, static_cast<Split>(split));
      if (domain == Domain::Target && split == static_cast<int>(Split::Train)) {
        std::vector<TextDocument> hidden = splits[split];
        for (auto& d : hidden) d.label.reset();
        write_text_corpus(path, hidden);
      } else {
        write_text_corpus(path, splits[split]);
      }
      written.push_back(path);
    }
  }

  const auto lex_path = dir / "lexicons.txt";
  std::ofstream out(lex_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + lex_path.string());
  auto dump = [&out](const char* name, const std::vector<std::string>& words) {
    for (const auto& w : words) out << name << '\t' << w << '\n';
  };
  const auto& lex = corpus.lexicons;
  dump("pivot_positive", lex.pivot_positive);
  dump("pivot_negative", lex.pivot_negative);
  dump("source_positive", lex.source_positive);
  dump("source_negative", lex.source_negative);
  dump("target_positive", lex.target_positive);
  dump("target_negative", lex.target_negative);
  dump("neutral", lex.neutral);
  if (!out) throw IoError("write failed for " + lex_path.string());
  written.push_back(lex_path);
  return written;
}

}  // namespace daml

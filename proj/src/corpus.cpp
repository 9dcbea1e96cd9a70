#include "daml/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "daml/errors.hpp"
#include "daml/rng.hpp"

namespace daml {

std::size_t Document::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

Vocab::Vocab() : tokens_{"<pad>", "<unk>"} {
  index_.emplace("<pad>", kPad);
  index_.emplace("<unk>", kUnk);
}

Vocab Vocab::build(std::span<const std::vector<TextDocument>* const> corpora, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto* corpus : corpora)
    for (const auto& doc : *corpus)
      for (const auto& sentence : doc.sentences)
        for (const auto& tok : sentence)
          if (counts[tok]++ == 0) order.push_back(tok);
  Vocab v;
  for (const auto& tok : order)
    if (counts[tok] >= min_count && !v.index_.contains(tok)) {
      v.index_.emplace(tok, static_cast<std::int64_t>(v.tokens_.size()));
      v.tokens_.push_back(tok);
    }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>")
    throw Error("vocabulary must start with <pad> and <unk>");
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i)
    if (!v.index_.emplace(v.tokens_[i], static_cast<std::int64_t>(i)).second)
      throw Error("duplicate vocabulary token '" + v.tokens_[i] + "'");
  return v;
}

std::int64_t Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::vector<std::string>> tokenize_sentences(const std::string& text) {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> current;
  std::string word;
  auto flush_word = [&] {
    if (!word.empty()) current.push_back(std::move(word));
    word.clear();
  };
  auto flush_sentence = [&] {
    flush_word();
    if (!current.empty()) sentences.push_back(std::move(current));
    current.clear();
  };
  for (unsigned char c : text) {
    if (c == '.' || c == '!' || c == '?')
      flush_sentence();
    else if (std::isspace(c))
      flush_word();
    else
      word.push_back(static_cast<char>(std::tolower(c)));
  }
  flush_sentence();
  return sentences;
}

std::vector<TextDocument> read_text_corpus(const std::filesystem::path& path, int num_labels,
                                           const std::string& id_prefix) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  const std::string prefix = id_prefix.empty() ? path.stem().string() : id_prefix;
  std::vector<TextDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError("empty line", line_no);
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2) throw ParseError("expected label<TAB>sentence...", line_no);

    TextDocument doc;
    doc.id = prefix + ":" + std::to_string(line_no);
    const std::string& label = fields[0];
    if (label != "-") {
      int value = 0;
      const auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size(), value);
      if (ec != std::errc() || ptr != label.data() + label.size())
        throw ParseError("label '" + label + "' is neither an integer nor '-'", line_no);
      if (value < 1 || value > num_labels)
        throw ParseError("label " + label + " outside 1.." + std::to_string(num_labels), line_no);
      doc.label = value;
    }
    for (std::size_t f = 1; f < fields.size(); ++f)
      for (auto& s : tokenize_sentences(fields[f])) doc.sentences.push_back(std::move(s));
    if (doc.sentences.empty()) throw ParseError("document has no tokens", line_no);
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_text_corpus(const std::filesystem::path& path, std::span<const TextDocument> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  for (const auto& doc : docs) {
    out << (doc.label ? std::to_string(*doc.label) : std::string("-"));
    for (const auto& sentence : doc.sentences) {
      out << '\t';
      for (std::size_t i = 0; i < sentence.size(); ++i) out << (i ? " " : "") << sentence[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Document encode(const TextDocument& doc, const Vocab& vocab, Domain domain) {
  Document out{doc.id, {}, doc.label, domain};
  for (const auto& sentence : doc.sentences) {
    if (sentence.empty()) throw Error("document " + doc.id + " has an empty sentence");
    auto& ids = out.sentences.emplace_back();
    for (const auto& tok : sentence) ids.push_back(vocab.id(tok));
  }
  if (out.sentences.empty()) throw Error("document " + doc.id + " has no sentences");
  return out;
}

std::vector<Document> encode_all(std::span<const TextDocument> docs, const Vocab& vocab, Domain domain) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(encode(d, vocab, domain));
  return out;
}

std::vector<Document> parse_corpus(const std::filesystem::path& path, const Vocab& vocab, Domain domain,
                                   int num_labels) {
  const auto text = read_text_corpus(path, num_labels);
  return encode_all(text, vocab, domain);
}

int align_labels(int label) {
  if (label < 1 || label > 10) throw Error("align_labels: rating " + std::to_string(label) + " outside 1..10");
  return (label + 1) / 2;
}

Batch make_batch(std::vector<Document> docs) {
  Batch b;
  for (const auto& d : docs) {
    if (d.sentences.empty()) throw Error("document " + d.id + " has no sentences");
    b.max_sentences = std::max(b.max_sentences, d.sentences.size());
    for (const auto& s : d.sentences) {
      if (s.empty()) throw Error("document " + d.id + " has an empty sentence");
      b.max_words = std::max(b.max_words, s.size());
    }
  }
  const std::size_t n = docs.size();
  b.token_ids.assign(n * b.max_sentences * b.max_words, Vocab::kPad);
  b.word_mask.assign(b.token_ids.size(), 0);
  b.sentence_mask.assign(n * b.max_sentences, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = docs[i];
    for (std::size_t j = 0; j < d.sentences.size(); ++j) {
      b.sentence_mask[i * b.max_sentences + j] = 1;
      for (std::size_t k = 0; k < d.sentences[j].size(); ++k) {
        b.token_ids[b.index(i, j, k)] = d.sentences[j][k];
        b.word_mask[b.index(i, j, k)] = 1;
      }
    }
    b.labels.push_back(d.label);
    b.domains.push_back(domain_flag(d.domain));
  }
  b.docs = std::move(docs);
  return b;
}

namespace {

// Cyclic stream over a document pool that reshuffles on every pass.
class DocStream {
 public:
  DocStream(std::vector<const Document*> pool, Rng& rng) : pool_(std::move(pool)), rng_(rng) { reshuffle(); }
  const Document& next() {
    if (pos_ == order_.size()) reshuffle();
    return *pool_[order_[pos_++]];
  }

 private:
  void reshuffle() {
    order_.resize(pool_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng_.shuffle(order_);
    pos_ = 0;
  }
  std::vector<const Document*> pool_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<Batch> make_batches(std::span<const Document> docs, std::size_t batch_size, std::uint64_t seed,
                                MixPolicy mix) {
  if (batch_size == 0) throw Error("make_batches: batch size must be positive");
  std::vector<Batch> batches;
  if (mix == MixPolicy::Sequential) {
    for (std::size_t i = 0; i < docs.size(); i += batch_size) {
      const auto end = std::min(docs.size(), i + batch_size);
      batches.push_back(make_batch(std::vector<Document>(docs.begin() + i, docs.begin() + end)));
    }
    return batches;
  }

  if (batch_size < 2 || batch_size % 2 != 0)
    throw Error("make_batches: half-half mixing needs an even batch size >= 2, got " + std::to_string(batch_size));
  std::vector<const Document*> source, target;
  for (const auto& d : docs) (d.domain == Domain::Source ? source : target).push_back(&d);
  if (source.empty() || target.empty())
    throw Error(std::string("make_batches: half-half mixing needs documents from both domains; ") +
                (source.empty() ? "source" : "target") + " domain is empty");

  const std::size_t half = batch_size / 2;
  const std::size_t count = (std::max(source.size(), target.size()) + half - 1) / half;
  Rng source_rng(derive_seed(seed, "source-stream"));
  Rng target_rng(derive_seed(seed, "target-stream"));
  DocStream source_stream(std::move(source), source_rng);
  DocStream target_stream(std::move(target), target_rng);
  batches.reserve(count);
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<Document> members;
    members.reserve(batch_size);
    for (std::size_t i = 0; i < half; ++i) members.push_back(source_stream.next());
    for (std::size_t i = 0; i < half; ++i) members.push_back(target_stream.next());
    batches.push_back(make_batch(std::move(members)));
  }
  return batches;
}

}  // namespace daml

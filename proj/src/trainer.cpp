#include "daml/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "daml/errors.hpp"
#include "daml/synth.hpp"

namespace daml {

void TrainConfig::resolve() {
  weights.validate();
  const bool single = variant == Variant::Naive || variant == Variant::Dann;
  if (num_groups == 0) num_groups = single ? 1 : 2;
  if (single && num_groups != 1)
    throw ConfigError(std::string("variant ") + daml::to_string(variant) + " trains exactly one group, got num_groups=" +
                      std::to_string(num_groups));
  if (!single && num_groups < 2)
    throw ConfigError(std::string("variant ") + daml::to_string(variant) + " needs num_groups >= 2");
  if (batch_size < 2 || batch_size % 2) throw ConfigError("batch_size must be even and >= 2");
  if (eval_every == 0) throw ConfigError("eval_every must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (max_epochs == 0 && max_steps == 0) throw ConfigError("max_epochs or max_steps must be positive");
  if (dims.embed_dim == 0 || dims.word_hidden == 0 || dims.sentence_hidden == 0)
    throw ConfigError("model dimensions must be positive");
  if (dims.num_labels < 2) throw ConfigError("num_labels must be >= 2");
  if (!(dims.init_scale > 0.0)) throw ConfigError("init_scale must be positive");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

std::uint64_t TrainConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_config_text(*this)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

TrainConfig train_config_from(const KeyValues& values) {
  TrainConfig c;
  std::string variant = to_string(c.variant), prober = to_string(c.prober_domain);
  ConfigBinder b(values);
  b.bind("variant", variant);
  b.bind("num_groups", c.num_groups);
  b.bind("eta", c.weights.eta);
  b.bind("lambda_d", c.weights.lambda_d);
  b.bind("lambda_m", c.weights.lambda_m);
  b.bind("prober_domain", prober);
  b.bind("num_labels", c.dims.num_labels);
  b.bind("embed_dim", c.dims.embed_dim);
  b.bind("word_hidden", c.dims.word_hidden);
  b.bind("sentence_hidden", c.dims.sentence_hidden);
  b.bind("word_attention", c.dims.word_attention);
  b.bind("sentence_attention", c.dims.sentence_attention);
  b.bind("head_layers", c.dims.head_layers);
  b.bind("head_hidden", c.dims.head_hidden);
  b.bind("init_scale", c.dims.init_scale);
  b.bind("learning_rate", c.adam.learning_rate);
  b.bind("beta1", c.adam.beta1);
  b.bind("beta2", c.adam.beta2);
  b.bind("epsilon", c.adam.epsilon);
  b.bind("batch_size", c.batch_size);
  b.bind("max_epochs", c.max_epochs);
  b.bind("max_steps", c.max_steps);
  b.bind("eval_every", c.eval_every);
  b.bind("patience", c.patience);
  b.bind("seed", c.seed);
  b.bind("share_embeddings", c.share_embeddings);
  b.bind("min_count", c.min_count);
  b.bind("embeddings_file", c.embeddings_file);
  b.bind("monitor_target", c.monitor_target);
  b.finish();
  c.variant = parse_variant(variant);
  c.prober_domain = parse_prober_domain(prober);
  c.resolve();
  return c;
}

KeyValues to_key_values(const TrainConfig& c) {
  return {
      {"variant", to_string(c.variant)},
      {"num_groups", std::to_string(c.num_groups)},
      {"eta", format_double(c.weights.eta)},
      {"lambda_d", format_double(c.weights.lambda_d)},
      {"lambda_m", format_double(c.weights.lambda_m)},
      {"prober_domain", to_string(c.prober_domain)},
      {"num_labels", std::to_string(c.dims.num_labels)},
      {"embed_dim", std::to_string(c.dims.embed_dim)},
      {"word_hidden", std::to_string(c.dims.word_hidden)},
      {"sentence_hidden", std::to_string(c.dims.sentence_hidden)},
      {"word_attention", std::to_string(c.dims.word_attention)},
      {"sentence_attention", std::to_string(c.dims.sentence_attention)},
      {"head_layers", std::to_string(c.dims.head_layers)},
      {"head_hidden", std::to_string(c.dims.head_hidden)},
      {"init_scale", format_double(c.dims.init_scale)},
      {"learning_rate", format_double(c.adam.learning_rate)},
      {"beta1", format_double(c.adam.beta1)},
      {"beta2", format_double(c.adam.beta2)},
      {"epsilon", format_double(c.adam.epsilon)},
      {"batch_size", std::to_string(c.batch_size)},
      {"max_epochs", std::to_string(c.max_epochs)},
      {"max_steps", std::to_string(c.max_steps)},
      {"eval_every", std::to_string(c.eval_every)},
      {"patience", std::to_string(c.patience)},
      {"seed", std::to_string(c.seed)},
      {"share_embeddings", c.share_embeddings ? "true" : "false"},
      {"min_count", std::to_string(c.min_count)},
      {"embeddings_file", c.embeddings_file},
      {"monitor_target", c.monitor_target ? "true" : "false"},
  };
}

std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_key_values(cfg)) out += k + " = " + v + "\n";
  return out;
}

namespace {

std::vector<Var> vars_of(const HeadParams& head) {
  std::vector<NamedParam> named;
  head.collect("", named);
  std::vector<Var> out;
  for (auto& p : named) out.push_back(p.var);
  return out;
}

void update_group(Group& g) {
  auto fe = g.extractor_params();
  adam_step(fe, g.extractor_adam);
  auto cls = vars_of(g.classifier);
  adam_step(cls, g.classifier_adam);
  auto dis = vars_of(g.discriminator);
  adam_step(dis, g.discriminator_adam);
  if (g.prober) {
    auto prb = vars_of(*g.prober);
    adam_step(prb, g.prober_adam);
  }
}

Tensor mean_of_others(const std::vector<Tensor>& values, std::size_t self) {
  Tensor out = Tensor::zeros_like(values[self]);
  const double n = static_cast<double>(values.size() - 1);
  for (std::size_t g = 0; g < values.size(); ++g) {
    if (g == self) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += values[g][i];
  }
  for (auto& v : out.data()) v /= n;
  return out;
}

std::string describe(const std::vector<LossRecord>& records) {
  std::ostringstream ss;
  for (std::size_t g = 0; g < records.size(); ++g)
    ss << " group " << g + 1 << ": cls=" << records[g].cls << " dom=" << records[g].dom
       << " mutual=" << records[g].mutual << ";";
  return ss.str();
}

}  // namespace

std::vector<LossRecord> train_step(std::vector<Group>& groups, const Batch& batch, const TrainConfig& cfg) {
  for (auto& g : groups)
    for (auto& p : g.parameters()) p.var.zero_grad();

  std::vector<LossRecord> records(groups.size());
  try {
    std::vector<BatchOutputs> outputs;
    std::vector<Tensor> classifier_snapshot, feature_snapshot;
    for (const auto& g : groups) {
      outputs.push_back(forward_group(g, batch, cfg.weights.eta));
      classifier_snapshot.push_back(outputs.back().classifier.value());
      feature_snapshot.push_back(outputs.back().features.value());
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      PeerOutputs peer;
      if (groups.size() > 1) {
        peer.classifier = mean_of_others(classifier_snapshot, g);
        peer.features = mean_of_others(feature_snapshot, g);
      }
      const auto terms = group_objective(cfg.variant, outputs[g], peer, cfg.weights, cfg.prober_domain);
      records[g].cls = terms.cls.value().item();
      if (terms.dom) records[g].dom = terms.dom.value().item();
      if (terms.mutual) records[g].mutual = terms.mutual.value().item();
      records[g].total = terms.total.value().item();
      backward(terms.total);
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string("non-finite value during training step (") + e.what() + ");" +
                        describe(records));
  }
  for (auto& g : groups) update_group(g);
  for (const auto& r : records)
    if (!std::isfinite(r.total)) throw TrainingError("non-finite loss;" + describe(records));
  return records;
}

TrainingData load_training_data(const std::filesystem::path& dir, const TrainConfig& cfg) {
  const int k = static_cast<int>(cfg.dims.num_labels);
  auto read = [&](Domain d, Split s) { return read_text_corpus(dir / corpus_file_name(d, s), k); };
  const auto source_train = read(Domain::Source, Split::Train);
  const auto target_train = read(Domain::Target, Split::Train);
  const auto source_dev = read(Domain::Source, Split::Dev);
  std::vector<TextDocument> target_dev;
  if (std::filesystem::exists(dir / corpus_file_name(Domain::Target, Split::Dev)))
    target_dev = read(Domain::Target, Split::Dev);

  const std::vector<TextDocument>* corpora[] = {&source_train, &target_train};
  TrainingData data;
  data.vocab = Vocab::build(corpora, cfg.min_count);
  data.source_train = encode_all(source_train, data.vocab, Domain::Source);
  data.target_train = encode_all(target_train, data.vocab, Domain::Target);
  data.source_dev = encode_all(source_dev, data.vocab, Domain::Source);
  data.target_dev = encode_all(target_dev, data.vocab, Domain::Target);
  return data;
}

void TrainingLog::write_tsv(std::ostream& out) const {
  out << "step\tepoch\tgroup\tcls\tdom\tmutual\ttotal\tsource_dev_acc\tsource_dev_rmse\ttarget_dev_acc\t"
         "target_dev_rmse\tselection_acc\tcheckpoint\n";
  auto opt = [](const std::optional<Metrics>& m, bool acc) {
    return m ? format_double(acc ? m->accuracy : m->rmse) : std::string("-");
  };
  for (const auto& e : evals) {
    for (std::size_t g = 0; g < e.losses.size(); ++g) {
      const auto& l = e.losses[g];
      out << e.step << '\t' << e.epoch << '\t' << g + 1 << '\t' << format_double(l.cls) << '\t'
          << format_double(l.dom) << '\t' << format_double(l.mutual) << '\t' << format_double(l.total) << '\t'
          << format_double(e.source_dev[g].accuracy) << '\t' << format_double(e.source_dev[g].rmse) << '\t'
          << opt(e.target_dev[g], true) << '\t' << opt(e.target_dev[g], false) << '\t'
          << format_double(e.selection_accuracy) << '\t' << (e.checkpointed ? 1 : 0) << '\n';
    }
    if (e.ensemble_source_dev)
      out << e.step << '\t' << e.epoch << "\tensemble\t-\t-\t-\t-\t" << format_double(e.ensemble_source_dev->accuracy)
          << '\t' << format_double(e.ensemble_source_dev->rmse) << "\t-\t-\t" << format_double(e.selection_accuracy)
          << '\t' << (e.checkpointed ? 1 : 0) << '\n';
  }
}

namespace {

std::vector<int> labels_of(std::span<const Document> docs) {
  std::vector<int> out;
  for (const auto& d : docs) {
    if (!d.label) throw Error("document " + d.id + " has no label");
    out.push_back(*d.label);
  }
  return out;
}

}  // namespace

FitResult fit(const TrainConfig& config, const TrainingData& data,
              const std::function<void(const EvalRecord&)>& on_eval) {
  if (data.source_train.empty() || data.source_dev.empty() || data.target_train.empty())
    throw Error("fit: source train, source dev and target train must be non-empty");
  TrainConfig cfg = config;
  cfg.resolve();
  cfg.dims.vocab_size = data.vocab.size();
  const int k = static_cast<int>(cfg.dims.num_labels);

  auto groups = init_groups(cfg.dims, cfg.num_groups, cfg.variant == Variant::Daml, cfg.share_embeddings, cfg.seed,
                            cfg.adam);
  if (!cfg.embeddings_file.empty())
    for (auto& g : groups)
      if (g.owns_embedding) load_embeddings(cfg.embeddings_file, data.vocab, g.extractor.embedding);

  std::vector<Document> pool = data.source_train;
  pool.insert(pool.end(), data.target_train.begin(), data.target_train.end());
  const auto source_dev_truth = labels_of(data.source_dev);
  const bool monitor = cfg.monitor_target && !data.target_dev.empty();
  const auto target_dev_truth = monitor ? labels_of(data.target_dev) : std::vector<int>{};

  FitResult result;
  result.checkpoint.config_text = to_config_text(cfg);
  result.checkpoint.config_hash = cfg.hash();
  result.checkpoint.vocab = data.vocab.tokens();

  double best = -1.0;
  std::size_t stale = 0, step = 0, since_eval = 0, last_eval_step = 0;
  std::vector<LossRecord> running(groups.size());

  auto evaluate_now = [&](std::size_t epoch) {
    EvalRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    for (auto& r : running) {
      const double n = since_eval ? static_cast<double>(since_eval) : 1.0;
      rec.losses.push_back({r.cls / n, r.dom / n, r.mutual / n, r.total / n});
      r = {};
    }
    since_eval = 0;
    double best_group = -1.0;
    for (const auto& g : groups) {
      rec.source_dev.push_back(
          evaluate(argmax_labels(classifier_probabilities(g, data.source_dev)), source_dev_truth, k));
      best_group = std::max(best_group, rec.source_dev.back().accuracy);
      if (monitor)
        rec.target_dev.push_back(
            evaluate(argmax_labels(classifier_probabilities(g, data.target_dev)), target_dev_truth, k));
      else
        rec.target_dev.emplace_back();
    }
    if (cfg.variant == Variant::Ne) {
      rec.ensemble_source_dev = evaluate(argmax_labels(ne_probabilities(groups, data.source_dev)), source_dev_truth, k);
      rec.selection_accuracy = rec.ensemble_source_dev->accuracy;
    } else {
      rec.selection_accuracy = best_group;
    }
    if (rec.selection_accuracy > best) {
      best = rec.selection_accuracy;
      stale = 0;
      rec.checkpointed = true;
      auto& ck = result.checkpoint;
      ck.step = step;
      ck.tensors = snapshot_parameters(groups);
      ck.dev_accuracy.clear();
      ck.dev_rmse.clear();
      for (const auto& m : rec.source_dev) {
        ck.dev_accuracy.push_back(m.accuracy);
        ck.dev_rmse.push_back(m.rmse);
      }
    } else {
      ++stale;
    }
    last_eval_step = step;
    if (on_eval) on_eval(rec);
    result.log.evals.push_back(std::move(rec));
    return stale >= cfg.patience;
  };

  bool stop = false;
  std::size_t epoch = 0;
  for (; !stop && (cfg.max_epochs == 0 || epoch < cfg.max_epochs); ++epoch) {
    const auto batches =
        make_batches(pool, cfg.batch_size, derive_seed(cfg.seed, "batching", epoch), MixPolicy::HalfHalf);
    for (const auto& batch : batches) {
      const auto losses = train_step(groups, batch, cfg);
      for (std::size_t g = 0; g < groups.size(); ++g) {
        running[g].cls += losses[g].cls;
        running[g].dom += losses[g].dom;
        running[g].mutual += losses[g].mutual;
        running[g].total += losses[g].total;
      }
      ++step;
      ++since_eval;
      if (step % cfg.eval_every == 0 && evaluate_now(epoch)) {
        stop = true;
        break;
      }
      if (cfg.max_steps && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
  }
  if (step > last_eval_step) evaluate_now(epoch == 0 ? 0 : epoch - 1);
  return result;
}

RestoredModel restore_model(const Checkpoint& ckpt) {
  RestoredModel m;
  m.config = train_config_from(parse_key_values(ckpt.config_text));
  if (m.config.hash() != ckpt.config_hash) throw Error("checkpoint: config hash does not match its config text");
  m.vocab = Vocab::from_tokens(ckpt.vocab);
  m.config.dims.vocab_size = m.vocab.size();
  m.groups = init_groups(m.config.dims, m.config.num_groups, m.config.variant == Variant::Daml,
                         m.config.share_embeddings, m.config.seed, m.config.adam);
  restore_parameters(m.groups, ckpt.tensors);
  return m;
}

void export_features(std::span<const Group> groups, std::span<const Document> docs, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& g : groups) {
    const Tensor features = document_features(g, docs);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      out << g.id << '\t' << docs[i].id << '\t' << domain_flag(docs[i].domain) << '\t'
          << (docs[i].label ? std::to_string(*docs[i].label) : std::string("-"));
      for (std::size_t j = 0; j < features.cols(); ++j) out << '\t' << format_double(features.at(i, j));
      out << '\n';
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write feature export " + path.string());
  file << out.str();
  if (!file) throw IoError("write failed for " + path.string());
}

}  // namespace daml

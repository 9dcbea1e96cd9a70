#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "daml/checkpoint.hpp"
#include "daml/config.hpp"
#include "daml/errors.hpp"
#include "daml/metrics.hpp"
#include "daml/model.hpp"

namespace daml {

struct TrainConfig {
  Variant variant = Variant::Daml;
  std::size_t num_groups = 0;  // 0 resolves to 1 for naive/dann and 2 otherwise
  LossWeights weights;
  ProberDomain prober_domain = ProberDomain::Target;
  ModelDims dims;  // vocab_size is filled in from the data
  AdamSettings adam;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t max_steps = 0;  // 0 = no step limit
  std::size_t eval_every = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  bool share_embeddings = false;
  std::size_t min_count = 1;
  std::string embeddings_file;
  bool monitor_target = true;  // also score target dev at each evaluation (never used for selection)

  /// Fills defaults that depend on other keys and checks invariants.
  void resolve();
  std::uint64_t hash() const;
};

TrainConfig train_config_from(const KeyValues& values);
KeyValues to_key_values(const TrainConfig& cfg);
std::string to_config_text(const TrainConfig& cfg);

/// Component losses of one group on one step.
struct LossRecord {
  double cls = 0.0;
  double dom = 0.0;
  double mutual = 0.0;
  double total = 0.0;
};

/// Thrown when a training step produces a non-finite value.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// One simultaneous update of all groups on a batch. Peer teachers are the
/// pre-step classifier outputs of the other groups (uniform mixture when
/// there are several peers).
std::vector<LossRecord> train_step(std::vector<Group>& groups, const Batch& batch, const TrainConfig& cfg);

struct TrainingData {
  Vocab vocab;
  std::vector<Document> source_train, source_dev, target_train, target_dev;
};

/// Loads `<dir>/{source,target}_{train,dev}.tsv`; target_dev is optional.
/// The vocabulary is built from both training files.
TrainingData load_training_data(const std::filesystem::path& dir, const TrainConfig& cfg);

struct EvalRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::vector<LossRecord> losses;  // mean since the previous evaluation
  std::vector<Metrics> source_dev;
  std::vector<std::optional<Metrics>> target_dev;
  std::optional<Metrics> ensemble_source_dev;  // ne only
  double selection_accuracy = 0.0;
  bool checkpointed = false;
};

struct TrainingLog {
  std::vector<EvalRecord> evals;
  void write_tsv(std::ostream& out) const;
};

struct FitResult {
  Checkpoint checkpoint;
  TrainingLog log;
};

/// Trains, evaluating every eval_every steps on source dev and keeping the
/// parameters with the best selection accuracy (best group, or the
/// ensemble for ne). Stops after `patience` evaluations without
/// improvement or after max_epochs / max_steps.
FitResult fit(const TrainConfig& cfg, const TrainingData& data,
              const std::function<void(const EvalRecord&)>& on_eval = nullptr);

/// Rebuilds the groups stored in a checkpoint.
struct RestoredModel {
  TrainConfig config;
  Vocab vocab;
  std::vector<Group> groups;
};
RestoredModel restore_model(const Checkpoint& ckpt);

/// Writes `group_id, doc_id, domain, label, d_1..d_n` tab-separated rows
/// for every (group, document) pair; label is `-` when absent.
void export_features(std::span<const Group> groups, std::span<const Document> docs,
                     const std::filesystem::path& path);

}  // namespace daml

#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <json.hpp>

#include "daml/errors.hpp"
#include "daml/gradcheck_suite.hpp"
#include "daml/synth.hpp"
#include "daml/trainer.hpp"

namespace daml::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  using Error::Error;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

json key_values_json(const KeyValues& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

json file_entry(const fs::path& path) { return {{"path", path.string()}, {"sha256", sha256_file(path)}}; }

json metrics_json(const Metrics& m) { return {{"acc", m.accuracy}, {"rmse", m.rmse}, {"count", m.count}}; }

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// Replaces or appends `key`.
void set_key(KeyValues& kv, const std::string& key, const std::string& value) {
  for (auto& [k, v] : kv)
    if (k == key) {
      v = value;
      return;
    }
  kv.emplace_back(key, value);
}

KeyValues load_optional(const fs::path& path) {
  if (path.empty()) return {};
  if (!fs::exists(path)) throw UsageError("config file not found: " + path.string());
  try {
    return load_key_values(path);
  } catch (const ParseError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TrainConfig resolved_config(KeyValues kv, const std::optional<std::uint64_t>& seed, const std::string& variant) {
  if (seed) set_key(kv, "seed", std::to_string(*seed));
  if (!variant.empty()) set_key(kv, "variant", variant);
  TrainConfig cfg = train_config_from(kv);
  cfg.resolve();
  return cfg;
}

std::vector<fs::path> training_inputs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (Domain d : {Domain::Source, Domain::Target})
    for (Split s : {Split::Train, Split::Dev}) {
      fs::path p = dir / corpus_file_name(d, s);
      if (fs::exists(p)) out.push_back(p);
    }
  return out;
}

std::vector<int> labels_of(std::span<const Document> docs) {
  std::vector<int> out;
  for (const auto& d : docs) {
    if (!d.label) throw UsageError("document " + d.id + " is unlabeled; evaluation needs labeled documents");
    out.push_back(*d.label);
  }
  return out;
}

struct Scored {
  Metrics metrics;
  std::string model;  // "g<id>" or "ensemble"
};

Scored score(std::span<const Group> groups, std::span<const Document> dev, std::span<const Document> docs, int k,
             bool ensemble) {
  const auto truth = labels_of(docs);
  if (ensemble) {
    if (groups.size() < 2)
      throw UsageError("--ensemble requires a checkpoint with at least 2 groups, this one has " +
                       std::to_string(groups.size()));
    return {evaluate(argmax_labels(ne_probabilities(groups, docs)), truth, k), "ensemble"};
  }
  const int id = groups.size() == 1 ? groups.front().id : select_model(groups, dev, k);
  const Group& g = groups[static_cast<std::size_t>(id - 1)];
  return {evaluate(argmax_labels(classifier_probabilities(g, docs)), truth, k), "g" + std::to_string(id)};
}

struct TrainedRun {
  FitResult fit;
  RestoredModel model;
};

TrainedRun train_and_save(const TrainConfig& cfg, const TrainingData& data, const fs::path& out_dir,
                          const fs::path& data_dir, std::ostream* progress) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(out_dir);
  auto on_eval = [&](const EvalRecord& r) {
    if (!progress) return;
    *progress << "step " << r.step << " epoch " << r.epoch;
    for (std::size_t g = 0; g < r.source_dev.size(); ++g)
      *progress << " | g" << g + 1 << " src_dev=" << format_double(r.source_dev[g].accuracy);
    *progress << (r.checkpointed ? " *" : "") << "\n";
  };
  FitResult result = fit(cfg, data, on_eval);

  const fs::path ckpt_path = out_dir / "checkpoint.bin";
  const fs::path log_path = out_dir / "train_log.tsv";
  save_checkpoint(ckpt_path, result.checkpoint);
  std::ostringstream log;
  result.log.write_tsv(log);
  write_file_atomic(log_path, log.str());
  write_file_atomic(out_dir / "config.txt", result.checkpoint.config_text);

  RestoredModel model = restore_model(result.checkpoint);
  json manifest;
  manifest["command"] = "train";
  manifest["config"] = key_values_json(to_key_values(cfg));
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << result.checkpoint.config_hash;
  manifest["config_hash"] = hash.str();
  manifest["inputs"] = json::array();
  for (const auto& p : training_inputs(data_dir)) manifest["inputs"].push_back(file_entry(p));
  manifest["outputs"] = {file_entry(ckpt_path), file_entry(log_path)};
  json final_metrics;
  final_metrics["step"] = result.checkpoint.step;
  final_metrics["selected_group"] =
      model.groups.size() == 1 ? 1 : select_by_accuracy(result.checkpoint.dev_accuracy);
  final_metrics["source_dev"] = json::array();
  for (std::size_t g = 0; g < result.checkpoint.dev_accuracy.size(); ++g)
    final_metrics["source_dev"].push_back(
        {{"group", g + 1}, {"acc", result.checkpoint.dev_accuracy[g]}, {"rmse", result.checkpoint.dev_rmse[g]}});
  manifest["final_metrics"] = final_metrics;
  manifest["wall_clock_seconds"] = seconds_since(start);
  write_json(out_dir / "manifest.json", manifest);
  return {std::move(result), std::move(model)};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

double mean_of(const std::vector<double>& xs) {
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256: init failed");
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

fs::path resolve_output(const fs::path& path) {
  if (path.is_absolute()) return path;
  const char* root = std::getenv(kOutputRootEnv);
  if (!root || !*root) return path;
  return fs::path(root) / path;
}

int cmd_gen_data(const GenDataOptions& options, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  KeyValues kv = load_optional(options.config);
  if (options.seed) set_key(kv, "seed", std::to_string(*options.seed));
  SynthSpec spec = synth_spec_from(kv);
  spec.validate();

  const fs::path dir = resolve_output(options.out);
  fs::create_directories(dir);
  const auto files = write_synthetic(gen_synthetic(spec), dir);

  json manifest;
  manifest["command"] = "gen-data";
  manifest["config"] = key_values_json(to_key_values(spec));
  manifest["inputs"] = json::array();
  if (!options.config.empty()) manifest["inputs"].push_back(file_entry(options.config));
  manifest["outputs"] = json::array();
  for (const auto& f : files) {
    manifest["outputs"].push_back(file_entry(f));
    out << f.string() << "\n";
  }
  manifest["wall_clock_seconds"] = seconds_since(start);
  write_json(dir / "manifest.json", manifest);
  return kSuccess;
}

int cmd_train(const TrainOptions& options, std::ostream& out) {
  // Config problems are reported before any data is read.
  TrainConfig cfg = resolved_config(load_optional(options.config), options.seed, options.variant);
  TrainingData data = load_training_data(options.data, cfg);
  const fs::path dir = resolve_output(options.out);
  auto run = train_and_save(cfg, data, dir, options.data, &out);
  out << "checkpoint " << (dir / "checkpoint.bin").string() << " step " << run.fit.checkpoint.step << "\n";
  return kSuccess;
}

int cmd_eval(const EvalOptions& options, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(options.checkpoint);
  RestoredModel model = restore_model(ckpt);
  const int k = static_cast<int>(model.config.dims.num_labels);
  if (options.ensemble && model.groups.size() < 2)
    throw UsageError("--ensemble requires a checkpoint with at least 2 groups, this one has " +
                     std::to_string(model.groups.size()));

  std::string domain = options.domain;
  if (domain.empty())
    domain = options.data.filename().string().rfind("source", 0) == 0 ? "source" : "target";
  if (domain != "source" && domain != "target") throw UsageError("--domain must be source or target");
  const auto docs = parse_corpus(options.data, model.vocab, domain == "source" ? Domain::Source : Domain::Target, k);
  if (docs.empty()) throw UsageError("corpus is empty: " + options.data.string());

  // Selection uses the stored source-dev accuracies of the checkpoint.
  Scored result;
  const auto truth = labels_of(docs);
  if (options.ensemble) {
    result = {evaluate(argmax_labels(ne_probabilities(model.groups, docs)), truth, k), "ensemble"};
  } else {
    const int id = select_by_accuracy(ckpt.dev_accuracy);
    const Group& g = model.groups[static_cast<std::size_t>(id - 1)];
    result = {evaluate(argmax_labels(classifier_probabilities(g, docs)), truth, k), "g" + std::to_string(id)};
  }

  if (!options.export_features.empty()) export_features(model.groups, docs, options.export_features);

  out << "model=" << result.model << " acc=" << format_double(result.metrics.accuracy)
      << " rmse=" << format_double(result.metrics.rmse) << " count=" << result.metrics.count << "\n";
  if (!options.out.empty()) {
    json j = metrics_json(result.metrics);
    j["model"] = result.model;
    j["confusion"] = result.metrics.confusion;
    const fs::path path = resolve_output(options.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_json(path, j);
  }
  return kSuccess;
}

int cmd_compare(const CompareOptions& options, std::ostream& out, std::ostream& err) {
  if (options.variants.empty() && options.prober_domains.empty() && options.sweep.empty())
    throw UsageError("compare needs a nonempty --variants list");
  if (options.seeds.empty()) throw UsageError("compare needs at least one seed");
  const KeyValues base = load_optional(options.config);
  for (const auto& v : options.variants) parse_variant(v);
  for (const auto& p : options.prober_domains) parse_prober_domain(p);

  std::string sweep_key;
  std::vector<std::string> sweep_values;
  if (!options.sweep.empty()) {
    const auto eq = options.sweep.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--sweep expects key=v1,v2,...");
    sweep_key = options.sweep.substr(0, eq);
    sweep_values = split_list(options.sweep.substr(eq + 1));
    if (sweep_values.empty()) throw UsageError("--sweep has no values");
  }

  // Validate every run's config up front.
  struct Job {
    std::string name;
    KeyValues kv;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  auto add_job = [&](const std::string& name, KeyValues kv, std::uint64_t seed) {
    resolved_config(kv, seed, "");
    jobs.push_back({name, std::move(kv), seed});
  };
  for (const auto& v : options.variants)
    for (auto s : options.seeds) {
      KeyValues kv = base;
      set_key(kv, "variant", v);
      add_job(v, kv, s);
    }
  for (const auto& p : options.prober_domains)
    for (auto s : options.seeds) {
      KeyValues kv = base;
      set_key(kv, "variant", "daml");
      set_key(kv, "prober_domain", p);
      add_job("daml-prober-" + p, kv, s);
    }
  for (const auto& value : sweep_values)
    for (auto s : options.seeds) {
      KeyValues kv = base;
      set_key(kv, "variant", "daml");
      set_key(kv, sweep_key, value);
      add_job("daml-" + sweep_key + "-" + value, kv, s);
    }

  const TrainConfig probe = resolved_config(base, std::nullopt, "");
  TrainingData data = load_training_data(options.data, probe);
  const int k = static_cast<int>(probe.dims.num_labels);
  const auto test = parse_corpus(options.data / corpus_file_name(Domain::Target, Split::Test), data.vocab,
                                 Domain::Target, k);
  const fs::path dir = resolve_output(options.out);
  fs::create_directories(dir);
  const std::string task = fs::absolute(options.data).lexically_normal().filename().string();

  struct Outcome {
    std::optional<Metrics> metrics;
    std::vector<std::pair<std::size_t, std::vector<double>>> curve;  // step, target-dev acc per group
  };
  // Identical resolved configs are trained once.
  std::map<std::string, Outcome> cache;
  std::vector<std::pair<const Job*, const Outcome*>> done;
  std::size_t failures = 0;
  for (const auto& job : jobs) {
    const TrainConfig cfg = resolved_config(job.kv, job.seed, "");
    const std::string key = to_config_text(cfg);
    auto it = cache.find(key);
    if (it == cache.end()) {
      Outcome outcome;
      const fs::path run_dir = dir / "runs" / (job.name + "_seed" + std::to_string(job.seed));
      try {
        auto run = train_and_save(cfg, data, run_dir, options.data, nullptr);
        const bool ensemble = cfg.variant == Variant::Ne;
        outcome.metrics = score(run.model.groups, data.source_dev, test, k, ensemble).metrics;
        for (const auto& e : run.fit.log.evals) {
          std::vector<double> accs;
          for (const auto& m : e.target_dev)
            if (m) accs.push_back(m->accuracy);
          outcome.curve.emplace_back(e.step, std::move(accs));
        }
        out << job.name << " seed " << job.seed << " acc=" << format_double(outcome.metrics->accuracy)
            << " rmse=" << format_double(outcome.metrics->rmse) << "\n";
      } catch (const std::exception& e) {
        ++failures;
        err << "run " << job.name << " seed " << job.seed << " failed: " << e.what() << "\n";
      }
      it = cache.emplace(key, std::move(outcome)).first;
    }
    done.emplace_back(&job, &it->second);
  }

  // Per-seed rows followed by the mean over the seeds that completed.
  auto rows_for = [&](const std::string& name, std::vector<ReportRow>& rows) {
    std::vector<double> accs, rmses;
    for (const auto& [job, outcome] : done) {
      if (job->name != name || !outcome->metrics) continue;
      rows.push_back({task, name, std::to_string(job->seed), "target_test", outcome->metrics->accuracy,
                      outcome->metrics->rmse});
      accs.push_back(outcome->metrics->accuracy);
      rmses.push_back(outcome->metrics->rmse);
    }
    if (!accs.empty()) rows.push_back({task, name, "mean", "target_test", mean_of(accs), mean_of(rmses)});
    return accs.empty() ? std::optional<std::pair<double, double>>{}
                        : std::make_pair(mean_of(accs), mean_of(rmses));
  };

  if (!options.variants.empty()) {
    std::vector<ReportRow> rows;
    for (const auto& v : options.variants) rows_for(v, rows);
    std::ostringstream csv;
    write_report_csv(csv, rows);
    write_file_atomic(dir / "comparison.csv", csv.str());
    write_report_table(out, rows);

    std::ostringstream curves;
    curves << "variant,seed,step,group,target_dev_acc\n";
    for (const auto& [job, outcome] : done) {
      if (std::find(options.variants.begin(), options.variants.end(), job->name) == options.variants.end())
        continue;
      for (const auto& [step, accs] : outcome->curve)
        for (std::size_t g = 0; g < accs.size(); ++g)
          curves << job->name << ',' << job->seed << ',' << step << ',' << g + 1 << ',' << format_double(accs[g])
                 << '\n';
    }
    write_file_atomic(dir / "curves.csv", curves.str());
  }

  if (!options.prober_domains.empty()) {
    std::ostringstream csv;
    csv << "prober_domain,acc,rmse\n";
    std::vector<ReportRow> rows;
    for (const auto& p : options.prober_domains)
      if (auto m = rows_for("daml-prober-" + p, rows))
        csv << p << ',' << format_double(m->first) << ',' << format_double(m->second) << '\n';
    write_file_atomic(dir / "prober_ablation.csv", csv.str());
  }

  if (!sweep_values.empty()) {
    std::ostringstream csv;
    csv << sweep_key << ",acc,rmse\n";
    std::vector<ReportRow> rows;
    for (const auto& value : sweep_values)
      if (auto m = rows_for("daml-" + sweep_key + "-" + value, rows))
        csv << value << ',' << format_double(m->first) << ',' << format_double(m->second) << '\n';
    write_file_atomic(dir / "sweep.csv", csv.str());
  }

  if (failures) {
    err << failures << " run(s) failed\n";
    return kRuntimeFailure;
  }
  return kSuccess;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  if (!(options.tolerance > 0.0)) throw UsageError("--tolerance must be positive");
  if (!(options.step > 0.0)) throw UsageError("--step must be positive");
  SuiteOptions suite;
  suite.check.tolerance = options.tolerance;
  suite.check.step = options.step;
  suite.seed = options.seed;
  std::optional<ScopedGrlSignFault> fault;
  if (options.inject_grl_fault) fault.emplace();

  const auto start = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite(suite);
  std::size_t failed = 0;
  const GradCheckCase* worst = nullptr;
  for (const auto& c : cases) {
    out << (c.report.passed ? "PASS " : "FAIL ") << c.name << " max_rel_err=" << c.report.max_rel_error;
    if (!c.report.passed) {
      ++failed;
      const auto& p = *std::find_if(c.report.params.begin(), c.report.params.end(),
                                    [&](const ParamCheck& q) { return q.name == c.report.worst_param; });
      out << " worst=" << p.name << "[" << p.worst_index << "] analytic=" << p.analytic << " numeric=" << p.numeric;
    }
    out << "\n";
    if (!worst || c.report.max_rel_error > worst->report.max_rel_error) worst = &c;
  }
  out << cases.size() - failed << "/" << cases.size() << " checks passed in " << seconds_since(start) << " s";
  if (worst) out << "; worst " << worst->name << " (" << worst->report.worst_param << ")";
  out << "\n";
  return failed ? kRuntimeFailure : kSuccess;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain-adapted sentiment classification with adversarial mutual learning"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic two-domain corpus");
  gen_cmd->add_option("--config", gen.config, "SynthSpec key=value file");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Overrides the spec seed");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train one configuration");
  train_cmd->add_option("--config", train.config, "TrainConfig key=value file");
  train_cmd->add_option("--data", train.data, "Corpus directory")->required();
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_option("--seed", train.seed, "Overrides the config seed");
  train_cmd->add_option("--variant", train.variant, "Overrides the config variant");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a labeled corpus file");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Corpus file")->required();
  eval_cmd->add_option("--out", eval.out, "Metrics JSON output");
  eval_cmd->add_option("--domain", eval.domain, "source or target (default: from file name)");
  eval_cmd->add_flag("--ensemble", eval.ensemble, "Average all groups' classifiers");
  eval_cmd->add_option("--export-features", eval.export_features, "Write document vectors here");

  CompareOptions compare;
  std::string variants = "naive,dann,daml", seeds = "1,2,3", prober;
  auto* compare_cmd = app.add_subcommand("compare", "Train variants over seeds and score target test");
  compare_cmd->add_option("--config", compare.config, "Base TrainConfig file");
  compare_cmd->add_option("--data", compare.data, "Corpus directory")->required();
  compare_cmd->add_option("--out", compare.out, "Output directory")->required();
  compare_cmd->add_option("--variant,--variants", variants, "Comma-separated variants")->capture_default_str();
  compare_cmd->add_option("--seed,--seeds", seeds, "Comma-separated seeds")->capture_default_str();
  compare_cmd->add_option("--prober-domains", prober, "Comma-separated prober domains for the ablation");
  compare_cmd->add_option("--sweep", compare.sweep, "key=v1,v2,... sensitivity sweep of daml");

  GradcheckOptions grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of ops and objectives");
  grad_cmd->add_option("--tolerance", grad.tolerance, "Maximum relative error")->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed, "Input seed")->capture_default_str();
  grad_cmd->add_option("--step", grad.step, "Central-difference step")->capture_default_str();
  grad_cmd->add_flag("--inject-grl-fault", grad.inject_grl_fault, "Flip the reversal sign (self-test)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(train, out);
    if (*eval_cmd) return cmd_eval(eval, out);
    if (*compare_cmd) {
      compare.variants = split_list(variants);
      compare.prober_domains = split_list(prober);
      for (const auto& s : split_list(seeds)) {
        try {
          std::size_t used = 0;
          compare.seeds.push_back(std::stoull(s, &used));
          if (used != s.size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
          throw UsageError("bad seed '" + s + "'");
        }
      }
      return cmd_compare(compare, out, err);
    }
    if (*grad_cmd) return cmd_gradcheck(grad, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace daml::cli

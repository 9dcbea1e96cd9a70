// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//
// Usage: acceptance [--work DIR] [--strict]
// The exit status is nonzero when a check cannot be evaluated, or with
// --strict when any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "daml/checkpoint.hpp"
#include "daml/gradcheck_suite.hpp"
#include "daml/metrics.hpp"
#include "daml/synth.hpp"
#include "daml/trainer.hpp"

using namespace daml;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "daml");
  std::ostringstream out;
  const int code = cli::run(args, out, std::cerr);
  if (code != 0) std::cerr << out.str();
  return code;
}

ModelDims micro_dims() {
  ModelDims dims;
  dims.vocab_size = 10;
  dims.embed_dim = dims.word_hidden = dims.sentence_hidden = 3;
  dims.head_hidden = 3;
  dims.init_scale = 0.5;
  return dims;
}

Document doc(std::vector<std::vector<std::int64_t>> sentences, std::optional<int> label, Domain domain) {
  Document d;
  d.id = "probe";
  d.sentences = std::move(sentences);
  d.label = label;
  d.domain = domain;
  return d;
}

std::vector<Var> head_vars(const HeadParams& head) {
  std::vector<NamedParam> named;
  head.collect("", named);
  std::vector<Var> out;
  for (auto& p : named) out.push_back(p.var);
  return out;
}

std::vector<Tensor> values_of(const std::vector<Var>& vars) {
  std::vector<Tensor> out;
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

std::size_t changed(const std::vector<Tensor>& before, const std::vector<Tensor>& after) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < before.size(); ++i) n += before[i] != after[i];
  return n;
}

// ---- criteria ----

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = run_gradcheck_suite();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t passed = 0;
  double worst = 0.0;
  std::string worst_name;
  bool has_daml = false;
  for (const auto& c : cases) {
    passed += c.report.passed && c.report.max_rel_error < 1e-4;
    has_daml = has_daml || c.name == "objective_daml";
    if (c.report.max_rel_error >= worst) {
      worst = c.report.max_rel_error;
      worst_name = c.name;
    }
  }
  return {passed == cases.size() && has_daml && seconds < 60.0,
          std::to_string(passed) + "/" + std::to_string(cases.size()) + " checks, worst " + worst_name + " " +
              fmt(worst) + ", " + fmt(seconds) + " s"};
}

Outcome grl_contract() {
  const double eta = 0.005, lambda_d = 1.0;
  // Single multiply: an arbitrary upstream gradient is scaled by -eta.
  const Tensor upstream = Tensor::matrix(2, 3, {0.3, -1.7, 2.5e-3, 1e6, -4.2e-9, 0.1});
  const Var x = Var::parameter(Tensor({2, 3}, 0.5));
  backward(sum(mul(grad_reverse(x, eta), Var::constant(upstream))));
  bool exact = true;
  for (std::size_t i = 0; i < upstream.size(); ++i) exact = exact && x.grad()[i] == -eta * upstream[i];

  // End to end through the extractor.
  auto groups = init_groups(micro_dims(), 1, false, false, 9);
  const Group& g = groups[0];
  const Batch batch = make_batch({doc({{2, 3, 4}, {5, 6}}, 4, Domain::Source),
                                  doc({{7, 8, 9}, {1, 3}}, std::nullopt, Domain::Target)});
  auto extractor = g.extractor_params();
  for (auto& p : g.parameters()) p.var.zero_grad();
  const auto reversed = forward_group(g, batch, eta);
  backward(scale(dom_loss(reversed), lambda_d));
  std::vector<Tensor> reversed_grads;
  for (const auto& v : extractor) reversed_grads.push_back(v.grad());
  for (auto& p : g.parameters()) p.var.zero_grad();
  BatchOutputs plain = reversed;
  plain.discriminator = head_forward(extract(batch, g.extractor), g.discriminator);
  backward(dom_loss(plain));
  double worst = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < extractor.size(); ++i)
    for (std::size_t j = 0; j < extractor[i].grad().size(); ++j) {
      const double unreversed = extractor[i].grad()[j];
      worst = std::max(worst, std::abs(reversed_grads[i][j] - (-eta * lambda_d) * unreversed));
      norm = std::max(norm, std::abs(unreversed));
    }
  return {exact && worst < 1e-10 && norm > 0.0,
          std::string("single multiply ") + (exact ? "bit-exact" : "NOT exact") + ", end-to-end max deviation " +
              fmt(worst)};
}

Outcome classifier_isolation(const TrainingData& data) {
  std::vector<Document> targets(data.target_train.begin(), data.target_train.begin() + 8);
  const Batch batch = make_batch(targets);

  TrainConfig cfg;
  cfg.variant = Variant::Daml;
  cfg.dims.vocab_size = data.vocab.size();
  cfg.resolve();
  auto groups = init_groups(cfg.dims, cfg.num_groups, true, false, 1);
  std::vector<std::vector<Tensor>> cls, prb, fe;
  for (const auto& g : groups) {
    cls.push_back(values_of(head_vars(g.classifier)));
    prb.push_back(values_of(head_vars(*g.prober)));
    fe.push_back(values_of(g.extractor_params()));
  }
  train_step(groups, batch, cfg);
  std::size_t cls_changed = 0, prb_changed = 0, fe_changed = 0;
  bool every_group = true;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto c = changed(cls[i], values_of(head_vars(groups[i].classifier)));
    const auto p = changed(prb[i], values_of(head_vars(*groups[i].prober)));
    const auto f = changed(fe[i], values_of(groups[i].extractor_params()));
    cls_changed += c;
    prb_changed += p;
    fe_changed += f;
    every_group = every_group && p > 0 && f > 0;
  }

  TrainConfig sml = cfg;
  sml.variant = Variant::Sml;
  auto sml_groups = init_groups(sml.dims, sml.num_groups, false, false, 1);
  const auto sml_before = values_of(head_vars(sml_groups[0].classifier));
  train_step(sml_groups, batch, sml);
  const auto sml_changed = changed(sml_before, values_of(head_vars(sml_groups[0].classifier)));

  return {cls_changed == 0 && every_group && sml_changed > 0,
          "daml: classifier tensors changed " + std::to_string(cls_changed) + ", prober " +
              std::to_string(prb_changed) + ", extractor " + std::to_string(fe_changed) +
              "; sml classifier tensors changed " + std::to_string(sml_changed)};
}

Outcome loss_values() {
  BatchOutputs c;
  c.classifier = Var::constant(Tensor({3, 5}, 0.2));
  c.domains = {1, 1, 1};
  c.labels = {1, 3, 5};
  const double cls = cls_loss(c).value().item();

  BatchOutputs d;
  d.discriminator = Var::constant(Tensor({4, 1}, 0.5));
  d.domains = {1, 0, 1, 0};
  const double dom = dom_loss(d).value().item();

  const Tensor p = Tensor::matrix(2, 5, {0.1, 0.2, 0.3, 0.15, 0.25, 0.5, 0.1, 0.1, 0.2, 0.1});
  const double kl = kl_loss(p, Var::constant(p)).value().item();

  const std::vector<int> expected{1, 1, 2, 2, 3, 3, 4, 4, 5, 5};
  bool aligned = true;
  for (int r = 1; r <= 10; ++r) aligned = aligned && align_labels(r) == expected[static_cast<std::size_t>(r - 1)];

  const double e_cls = std::abs(cls - std::log(5.0)), e_dom = std::abs(dom - std::log(2.0)), e_kl = std::abs(kl);
  return {e_cls <= 1e-9 && e_dom <= 1e-9 && e_kl <= 1e-12 && aligned,
          "cls-ln5 " + fmt(e_cls) + ", dom-ln2 " + fmt(e_dom) + ", kl " + fmt(e_kl) + ", align_labels " +
              (aligned ? "exact" : "wrong")};
}

std::map<std::string, double> mean_accuracy(const fs::path& csv) {
  std::map<std::string, double> out;
  for (const auto& row : read_report_csv(csv))
    if (row.seed == "mean") out[row.variant] = row.acc;
  return out;
}

double slowest_run(const fs::path& runs) {
  double worst = 0.0;
  for (const auto& entry : fs::directory_iterator(runs)) {
    std::ifstream in(entry.path() / "manifest.json");
    const auto manifest = nlohmann::json::parse(in);
    worst = std::max(worst, manifest.at("wall_clock_seconds").get<double>());
  }
  return worst;
}

Outcome direction_of_effect(const fs::path& compare_dir) {
  const auto acc = mean_accuracy(compare_dir / "comparison.csv");
  const double daml = acc.at("daml"), naive = acc.at("naive"), dann = acc.at("dann");
  const double slowest = slowest_run(compare_dir / "runs");
  return {daml - naive >= 0.05 && daml >= dann - 0.01 && slowest < 900.0,
          "mean target-test acc naive " + fmt(naive) + ", dann " + fmt(dann) + ", daml " + fmt(daml) +
              "; daml-naive " + fmt(daml - naive) + ", daml-dann " + fmt(daml - dann) + "; slowest run " +
              fmt(slowest) + " s"};
}

Outcome curves_report(const fs::path& compare_dir) {
  std::ifstream in(compare_dir / "curves.csv");
  std::string line;
  std::getline(in, line);
  if (line != "variant,seed,step,group,target_dev_acc") return {false, "bad header: " + line};
  std::map<std::string, std::size_t> points;
  std::map<std::string, std::pair<double, double>> first_last;  // group 1, seed 1
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) return {false, "malformed row: " + line};
    const double acc = std::stod(f[4]);
    if (!(acc >= 0.0 && acc <= 1.0)) return {false, "accuracy out of range: " + line};
    ++points[f[0]];
    if (f[1] == "1" && f[3] == "1") {
      auto [it, fresh] = first_last.try_emplace(f[0], acc, acc);
      if (!fresh) it->second.second = acc;
    }
  }
  std::string detail;
  bool ok = true;
  for (const char* v : {"dann", "sml", "daml"}) {
    ok = ok && points[v] > 0;
    detail += std::string(v) + " " + std::to_string(points[v]) + " points";
    if (first_last.contains(v))
      detail += " (seed 1 group 1: " + fmt(first_last[v].first) + " -> " + fmt(first_last[v].second) + ")";
    detail += "; ";
  }
  return {ok, detail.substr(0, detail.size() - 2)};
}

Outcome determinism(const fs::path& data_dir, const fs::path& work) {
  write_text(work / "determinism.cfg", "max_steps = 60\neval_every = 20\n");
  for (const char* run : {"a", "b"})
    if (run_cli({"train", "--config", (work / "determinism.cfg").string(), "--data", data_dir.string(), "--out",
                 (work / "determinism" / run).string(), "--variant", "daml", "--seed", "5"}) != 0)
      return {false, "train failed"};
  const auto a = work / "determinism" / "a", b = work / "determinism" / "b";
  const bool log_same = read_bytes(a / "train_log.tsv") == read_bytes(b / "train_log.tsv");
  const bool ckpt_same = read_bytes(a / "checkpoint.bin") == read_bytes(b / "checkpoint.bin");
  return {log_same && ckpt_same && !read_bytes(a / "checkpoint.bin").empty(),
          std::string("train_log ") + (log_same ? "identical" : "differs") + ", checkpoint " +
              (ckpt_same ? "identical" : "differs") + " (sha256 " + cli::sha256_file(a / "checkpoint.bin").substr(0, 12) +
              ")"};
}

Outcome prober_ablation(const fs::path& ablation_dir) {
  std::ifstream in(ablation_dir / "prober_ablation.csv");
  std::string line;
  std::getline(in, line);
  if (line != "prober_domain,acc,rmse") return {false, "bad header: " + line};
  std::vector<std::string> domains;
  std::string detail;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 3) return {false, "malformed row: " + line};
    std::stod(f[1]);
    std::stod(f[2]);
    domains.push_back(f[0]);
    detail += f[0] + " acc " + fmt(std::stod(f[1])) + " rmse " + fmt(std::stod(f[2])) + "; ";
  }
  const bool ok = domains == std::vector<std::string>{"target", "source", "both"};
  return {ok, detail.empty() ? "no rows" : detail.substr(0, detail.size() - 2)};
}

Outcome checkpoint_round_trip(const TrainingData& data, const fs::path& work) {
  TrainConfig cfg;
  cfg.variant = Variant::Daml;
  cfg.max_steps = 20;
  cfg.eval_every = 10;
  cfg.resolve();
  const auto fit_result = fit(cfg, data);
  const auto before = restore_model(fit_result.checkpoint);
  save_checkpoint(work / "roundtrip.bin", fit_result.checkpoint);
  const auto after = restore_model(load_checkpoint(work / "roundtrip.bin"));

  std::vector<Document> probe(data.source_dev.begin(), data.source_dev.begin() + 4);
  probe.insert(probe.end(), data.target_dev.begin(), data.target_dev.begin() + 4);
  const Batch batch = make_batch(probe);
  NoGradGuard no_grad;
  std::size_t compared = 0, mismatched = 0;
  for (std::size_t g = 0; g < before.groups.size(); ++g) {
    const auto x = forward_group(before.groups[g], batch, cfg.weights.eta);
    const auto y = forward_group(after.groups[g], batch, cfg.weights.eta);
    for (const auto& [a, b] : {std::pair{x.features, y.features}, {x.classifier, y.classifier},
                               {x.prober, y.prober}, {x.discriminator, y.discriminator}}) {
      ++compared;
      mismatched += a.value() != b.value();
    }
  }
  return {mismatched == 0 && compared > 0,
          std::to_string(compared - mismatched) + "/" + std::to_string(compared) + " output tensors bit-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "daml_acceptance";
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict") {
      strict = true;
    } else if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--strict]\n";
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  const fs::path data_dir = work / "data";
  const fs::path compare_dir = work / "compare";
  const fs::path ablation_dir = work / "ablation";

  std::size_t failed = 0, errors = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      ++errors;
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " " << id << " " << name << ": " << o.detail << std::endl;
  };

  // Shared synthetic data at the default spec (2000/250/250, K=5, p_priv 0.8).
  if (run_cli({"gen-data", "--out", data_dir.string()}) != 0) {
    std::cerr << "gen-data failed\n";
    return 2;
  }
  TrainConfig defaults;
  defaults.resolve();
  const TrainingData data = load_training_data(data_dir, defaults);

  bool compared = false, ablated = false;
  auto ensure_compare = [&] {
    if (compared) return;
    compared = true;
    if (run_cli({"compare", "--data", data_dir.string(), "--out", compare_dir.string(), "--variants",
                 "naive,dann,sml,daml", "--seeds", "1,2,3"}) != 0)
      throw std::runtime_error("compare failed");
  };
  auto ensure_ablation = [&] {
    if (ablated) return;
    ablated = true;
    if (run_cli({"compare", "--data", data_dir.string(), "--out", ablation_dir.string(), "--variants", "",
                 "--seeds", "1", "--prober-domains", "target,source,both"}) != 0)
      throw std::runtime_error("prober ablation failed");
  };

  report(1, "gradient correctness", gradient_correctness);
  report(2, "reversal contract", grl_contract);
  report(3, "classifier isolation", [&] { return classifier_isolation(data); });
  report(4, "loss unit values", loss_values);
  report(5, "direction of effect", [&] {
    ensure_compare();
    return direction_of_effect(compare_dir);
  });
  report(6, "training curves report", [&] {
    ensure_compare();
    return curves_report(compare_dir);
  });
  report(7, "determinism", [&] { return determinism(data_dir, work); });
  report(8, "prober-domain ablation", [&] {
    ensure_ablation();
    return prober_ablation(ablation_dir);
  });
  report(9, "checkpoint round trip", [&] { return checkpoint_round_trip(data, work); });

  std::cout << (9 - failed) << "/9 criteria passed" << std::endl;
  if (errors > 0) return 2;
  return strict && failed > 0 ? 1 : 0;
}

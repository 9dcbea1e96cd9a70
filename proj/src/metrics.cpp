#include "daml/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "daml/config.hpp"
#include "daml/errors.hpp"

namespace daml {

Metrics evaluate(std::span<const int> predictions, std::span<const int> truths, int num_labels) {
  if (truths.empty()) throw Error("evaluate: empty document list");
  if (predictions.size() != truths.size()) throw Error("evaluate: prediction/truth count mismatch");
  Metrics m;
  m.count = truths.size();
  m.confusion.assign(static_cast<std::size_t>(num_labels), std::vector<std::size_t>(num_labels, 0));
  std::size_t correct = 0;
  double squared = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = predictions[i];
    if (t < 1 || t > num_labels || p < 1 || p > num_labels)
      throw Error("evaluate: rating outside 1.." + std::to_string(num_labels));
    ++m.confusion[t - 1][p - 1];
    correct += (t == p);
    squared += static_cast<double>((p - t) * (p - t));
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.count);
  m.rmse = std::sqrt(squared / static_cast<double>(m.count));
  return m;
}

Metrics evaluate(const std::function<int(const Document&)>& predict, std::span<const Document> docs, int num_labels) {
  std::vector<int> preds, truths;
  for (const auto& d : docs) {
    if (!d.label) throw Error("evaluate: document " + d.id + " has no label");
    truths.push_back(*d.label);
    preds.push_back(predict(d));
  }
  return evaluate(preds, truths, num_labels);
}

void write_report_csv(std::ostream& out, std::span<const ReportRow> rows) {
  out << "task,variant,seed,split,acc,rmse\n";
  for (const auto& r : rows)
    out << r.task << ',' << r.variant << ',' << r.seed << ',' << r.split << ',' << format_double(r.acc) << ','
        << format_double(r.rmse) << '\n';
}

void write_report_table(std::ostream& out, std::span<const ReportRow> rows) {
  out << std::left << std::setw(18) << "task" << std::setw(22) << "variant" << std::setw(7) << "seed"
      << std::setw(12) << "split" << std::right << std::setw(8) << "acc" << std::setw(8) << "rmse" << '\n';
  for (const auto& r : rows)
    out << std::left << std::setw(18) << r.task << std::setw(22) << r.variant << std::setw(7) << r.seed
        << std::setw(12) << r.split << std::right << std::fixed << std::setprecision(3) << std::setw(8) << r.acc
        << std::setw(8) << r.rmse << '\n';
  out << std::defaultfloat;
}

std::vector<ReportRow> read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "task,variant,seed,split,acc,rmse")
    throw ParseError("unexpected report header", 1);
  std::vector<ReportRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ParseError("expected 6 columns", line_no);
    try {
      rows.push_back({f[0], f[1], f[2], f[3], std::stod(f[4]), std::stod(f[5])});
    } catch (const std::exception&) {
      throw ParseError("non-numeric metric", line_no);
    }
  }
  return rows;
}

}  // namespace daml

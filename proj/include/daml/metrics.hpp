#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "daml/corpus.hpp"

namespace daml {

struct Metrics {
  double accuracy = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
  // confusion[truth - 1][prediction - 1]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Accuracy and RMSE between integer ratings in 1..num_labels.
Metrics evaluate(std::span<const int> predictions, std::span<const int> truths, int num_labels);
Metrics evaluate(const std::function<int(const Document&)>& predict, std::span<const Document> docs, int num_labels);

/// One row of the comparison report.
struct ReportRow {
  std::string task;
  std::string variant;
  std::string seed;
  std::string split;
  double acc = 0.0;
  double rmse = 0.0;
};

void write_report_csv(std::ostream& out, std::span<const ReportRow> rows);
void write_report_table(std::ostream& out, std::span<const ReportRow> rows);
std::vector<ReportRow> read_report_csv(const std::filesystem::path& path);

}  // namespace daml

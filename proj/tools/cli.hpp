#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace daml::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kRuntimeFailure = 2 };

/// Environment variable naming a root directory that relative --out paths
/// are resolved against.
inline constexpr const char* kOutputRootEnv = "DAML_OUTPUT_ROOT";

struct GenDataOptions {
  std::filesystem::path config;  // SynthSpec key=value file; empty = defaults
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct TrainOptions {
  std::filesystem::path config;  // empty = defaults
  std::filesystem::path data;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::string variant;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;  // one corpus file
  std::filesystem::path out;   // optional metrics JSON
  std::string domain;          // source|target; inferred from the file name when empty
  bool ensemble = false;
  std::filesystem::path export_features;
};

struct CompareOptions {
  std::filesystem::path config;
  std::filesystem::path data;
  std::filesystem::path out;
  std::vector<std::string> variants;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> prober_domains;  // daml runs per routing when nonempty
  std::string sweep;                        // "key=v1,v2,..." daml sensitivity sweep
};

struct GradcheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::uint64_t seed = 3;
  bool inject_grl_fault = false;
};

int cmd_gen_data(const GenDataOptions& options, std::ostream& out);
int cmd_train(const TrainOptions& options, std::ostream& out);
int cmd_eval(const EvalOptions& options, std::ostream& out);
int cmd_compare(const CompareOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

/// Parses `args` (args[0] is the program name), dispatches and maps
/// exceptions to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// `path` itself when absolute or when the output-root variable is unset.
std::filesystem::path resolve_output(const std::filesystem::path& path);

}  // namespace daml::cli

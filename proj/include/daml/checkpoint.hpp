#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "daml/corpus.hpp"
#include "daml/model.hpp"

namespace daml {

/// Saved state of all groups at one training step.
///
/// File layout (little-endian): magic "DAMLCKP1"; u64 config hash; u64
/// step; u32-length-prefixed resolved config text; u32 token count then
/// u32-length-prefixed tokens; u32 group count then (f64 dev accuracy, f64
/// dev rmse) per group; u32 tensor count then per tensor a
/// u32-length-prefixed name, u32 rank, u64 dims and f64 values.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  std::string config_text;
  std::vector<std::string> vocab;
  std::vector<double> dev_accuracy;
  std::vector<double> dev_rmse;
  std::vector<std::pair<std::string, Tensor>> tensors;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Copies the current parameter values of `groups`.
std::vector<std::pair<std::string, Tensor>> snapshot_parameters(std::span<const Group> groups);
/// Writes named tensors back into matching group parameters; every
/// parameter of every group must be present.
void restore_parameters(std::span<Group> groups, const std::vector<std::pair<std::string, Tensor>>& tensors);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `contents` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace daml

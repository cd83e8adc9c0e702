#pragma once

#include <cstdint>
#include <string>

namespace odcs {

/// Every training hyperparameter, serialized as "key = value" lines with '#'
/// comments. Defaults are the paper's settings. Unknown keys are parse
/// errors so typos never silently fall back to a default.
struct TrainConfig {
  double lr = 0.0002;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 8;
  int epochs = 10;
  double lambda = 150.0;
  double smooth = 1e-6;
  double width_scale = 1.0;
  int input_size = 256;
  std::uint64_t seed = 0;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool augment = true;
  bool aug_hflip = true;
  bool aug_vflip = true;
  bool aug_scale = true;
  bool aug_illumination = true;
  double aug_scale_lo = 0.9;
  double aug_scale_hi = 1.1;
  double aug_illum_lo = 0.8;
  double aug_illum_hi = 1.2;
  bool extractor_trainable = false;
  std::string checkpoint_dir = "checkpoints";
  std::string train_manifest;

  /// Throws ContractError naming the first field out of range.
  void validate() const;
  /// Canonical text form; parse(serialize()) reproduces the exact values.
  std::string serialize() const;
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);
};

/// True when the two configs serialize identically apart from `epochs`
/// (resuming may extend a run, nothing else may change).
bool config_equal_except_epochs(const TrainConfig& a, const TrainConfig& b);

/// Joins a relative path onto base_dir; absolute paths pass through.
std::string resolve_path(const std::string& base_dir, const std::string& path);
/// Directory part of a path ("." when none).
std::string parent_dir(const std::string& path);

}  // namespace odcs

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "odcs/tensor.hpp"

namespace odcs {

struct AdamConfig {
  float lr = 0.0002f;
  float beta1 = 0.5f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  void validate() const;
};

/// Standard bias-corrected Adam over a named parameter list. Moment buffers
/// are float32 like the parameters; the per-element update is evaluated in
/// 64-bit and rounded once per store, which pins the arithmetic exactly for
/// the hand-oracle tests.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, const AdamConfig& config);

  /// One update over all parameters. Throws ContractError naming the first
  /// parameter whose gradient buffer is missing.
  void step();
  /// Zero-fills every parameter's gradient buffer (allocating if absent).
  void zero_grad();

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t t);

  const AdamConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }

  /// Moment buffers as (adam.m.<name>, tensor) / (adam.v.<name>, tensor)
  /// pairs for checkpointing.
  std::vector<std::pair<std::string, Tensor>> state_tensors();

 private:
  AdamConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<Tensor> m_, v_;
  std::int64_t step_count_ = 0;
};

}  // namespace odcs

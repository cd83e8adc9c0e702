#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "odcs/tensor.hpp"

namespace odcs {

/// Binary training snapshot. Layout (all integers and floats little-endian):
///   "ODCS"  magic
///   u32     format version (currently 1)
///   u64     config text length, then the canonical TrainConfig text
///   i64     completed epochs
///   i64     completed optimizer steps
///   u64,u64 RNG state words
///   u32     tensor count, then per tensor:
///           u32 name length, name bytes, u32 rank, u32 dims..., f32 values
/// Tensor order is preserved, so save -> load -> save is byte-identical.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_text;
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  std::uint64_t rng_state = 0;
  std::uint64_t rng_inc = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace odcs

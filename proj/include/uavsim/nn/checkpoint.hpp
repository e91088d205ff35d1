#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uavsim/nn/tensor.hpp"

namespace uavsim::nn {

// Model checkpoint: a versioned text file holding one line of architecture
// config (JSON by convention) plus named parameter tensors with shape
// headers. Values are written as C hexfloats, so save/load round-trips
// bit-exactly.
//
//   uavnn-checkpoint v1
//   arch {"model":"...",...}
//   tensors <count>
//   tensor <name> <rank> <d0> <d1> ...
//   <numel hexfloat values, whitespace separated>
struct Checkpoint {
  std::string arch;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& find(const std::string& name) const;
};

// Write-temp-then-rename; no partial files on failure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace uavsim::nn

// Copyright 2026 The tafenet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TAFE_CHECKPOINT_HPP
#define TAFE_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tafe/model.hpp"
#include "tafe/optim.hpp"

namespace tafe {

/// Architecture manifest stored alongside the parameter blocks.
struct CheckpointMeta {
  ModelConfig model;
  std::string task_kind = "attribute-vector";
  std::uint64_t seed = 0;

  bool operator==(const CheckpointMeta&) const = default;
};

std::string manifest_json(const CheckpointMeta& meta);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  TafeNet<float> model;

  bool has_optimizer = false;
  std::string opt_kind;
  long opt_step = 0;
  std::vector<double> opt_group_lrs;
  // Aligned with model.parameters() order.
  std::vector<Tensor<float>> opt_m1, opt_m2;
};

/// Single-file container: named parameter blocks (shape + 32-bit values)
/// plus a JSON manifest of the architecture. Optionally embeds optimizer
/// state for resumable training. Layout documented in docs/formats.md.
void save_checkpoint(const std::string& path, TafeNet<float>& model, const CheckpointMeta& meta,
                     const Optimizer<float>* opt = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace tafe

#endif  // TAFE_CHECKPOINT_HPP

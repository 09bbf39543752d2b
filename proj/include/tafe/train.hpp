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

#ifndef TAFE_TRAIN_HPP
#define TAFE_TRAIN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "tafe/data.hpp"
#include "tafe/losses.hpp"
#include "tafe/model.hpp"
#include "tafe/optim.hpp"

namespace tafe {

struct TrainConfig {
  LossConfig loss;
  OptimizerConfig optimizer;
  std::vector<double> group_lrs = {1e-4, 1e-5};  // [main, task-embed]
  std::vector<long> milestones = {30, 45};
  double decay = 10.0;
  std::size_t batch_size = 32;
  long epochs = 60;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;  // held-out seen-class slice for best-checkpoint selection
  std::string out_dir;
  std::string task_kind = "attribute-vector";

  void validate() const;
};

struct EpochStats {
  long epoch = 0;
  double loss_cls = 0.0;
  double loss_emb = 0.0;
  double loss_total = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
  std::vector<double> lrs;
};

struct TrainResult {
  std::string final_path, best_path, log_path;
  std::vector<EpochStats> history;
  long best_epoch = -1;
  bool aborted_non_finite = false;
  std::string abort_reason;
};

/// Minibatch training of the joint objective. Writes one structured log row
/// per epoch to <out>/train_log.jsonl and checkpoints to <out>/best.ckpt and
/// <out>/final.ckpt. Fully deterministic for a fixed seed in single-threaded
/// mode. On a non-finite loss the run stops without applying the step; the
/// last good checkpoints stay on disk and the result is flagged.
TrainResult train_model(TafeNet<float>& model, const FeatureStore& store,
                        const TaskTable& table, const SplitSpec& split,
                        const TrainConfig& cfg);

}  // namespace tafe

#endif  // TAFE_TRAIN_HPP

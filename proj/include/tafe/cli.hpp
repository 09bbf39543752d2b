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

#ifndef TAFE_CLI_HPP
#define TAFE_CLI_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tafe/data.hpp"
#include "tafe/losses.hpp"
#include "tafe/model.hpp"
#include "tafe/optim.hpp"

namespace tafe::cli {

/// Declarative run configuration: a JSON file plus flag overrides (flags win).
/// Validation happens before any heavy work; the seed is mandatory so nothing
/// ever falls back to wall-clock seeding.
struct RunConfig {
  // data: either an inline synthetic config or the three dataset files.
  std::optional<SyntheticConfig> synthetic;
  std::string features_path, tasks_path, split_path;
  TaskKind task_kind = TaskKind::attribute_vector;
  bool normalize_features = false;

  // model
  std::size_t embed_dim = 2048;
  std::vector<std::size_t> widths = {2048, 2048, 2048};
  std::size_t task_hidden = 2048;
  std::size_t task_depth = 0;  // 0 = auto: 2 when fewer than 32 training tasks, else 3

  // loss
  LossConfig loss;

  // optimizer
  OptKind opt_kind = OptKind::adam;
  double lr_main = 1e-4;
  double lr_task_embed = 1e-5;
  std::vector<long> milestones = {30, 45};
  double decay = 10.0;
  std::size_t batch_size = 32;
  long epochs = 60;
  double momentum = 0.9;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

  // run
  std::vector<std::string> protocols = {"zsl", "gzsl"};
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out_dir = ".";
  bool deterministic = true;
  int threads = 1;

  // embed subcommand
  std::vector<std::int64_t> embed_samples;  // empty = all test samples
  std::vector<std::int64_t> embed_tasks;    // empty = all classes

  // fewshot / shuffle protocol settings
  std::vector<std::size_t> fewshot_shots = {1, 2};
  std::size_t fewshot_trials = 5;
  std::size_t shuffle_repeats = 20;

  void validate() const;

  /// Evaluation honors --threads only when determinism is waived.
  int eval_threads() const { return deterministic ? 1 : threads; }
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::string>> protocols;
  std::optional<bool> deterministic;
  std::optional<int> threads;
};

RunConfig load_run_config(const std::string& path, const Overrides& overrides);

struct Dataset {
  FeatureStore store;
  TaskTable tasks;
  SplitSpec split;
};

/// Generates or loads the dataset named by the config.
Dataset load_dataset(const RunConfig& cfg);

/// Model architecture derived from the config and the dataset's dimensions.
ModelConfig derive_model_config(const RunConfig& cfg, const Dataset& data);

// Subcommands. Each returns a process exit code: 0 iff every requested
// artifact was written completely.
int cmd_train(const RunConfig& cfg);
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path);
int cmd_embed(const RunConfig& cfg, const std::string& checkpoint_path);
int cmd_gensynth(const RunConfig& cfg);

}  // namespace tafe::cli

#endif  // TAFE_CLI_HPP

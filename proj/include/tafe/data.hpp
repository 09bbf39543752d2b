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

#ifndef TAFE_DATA_HPP
#define TAFE_DATA_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tafe/tensor.hpp"

namespace tafe {

/// Precomputed backbone features for a set of samples, with class labels.
struct FeatureStore {
  Tensor<float> features;                 // N x dim, row-major
  std::vector<std::int64_t> sample_ids;   // length N
  std::vector<std::int64_t> labels;       // length N, class (or pair) ids

  std::size_t size() const { return sample_ids.size(); }
  std::size_t dim() const { return features.cols(); }

  Tensor<float> row(std::size_t i) const { return row_of(features, i); }

  /// Row indices whose label equals `cls`, in file order.
  std::vector<std::size_t> rows_for_class(std::int64_t cls) const;

  void validate() const;
};

enum class TaskKind { attribute_vector, word_concat, one_hot, exemplar_feature };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

/// Per-class (or per-pair) task description vectors.
struct TaskTable {
  TaskKind kind = TaskKind::attribute_vector;
  std::vector<std::int64_t> class_ids;  // sorted ascending, unique
  std::vector<std::string> names;       // aligned with class_ids
  Tensor<float> descriptions;           // C x dim, aligned with class_ids

  std::size_t size() const { return class_ids.size(); }
  std::size_t dim() const { return descriptions.cols(); }

  bool has(std::int64_t id) const;
  std::size_t index_of(std::int64_t id) const;  // throws naming the class if absent

  /// Rows for an ordered list of class ids, as one matrix.
  Tensor<float> rows_for(const std::vector<std::int64_t>& ids) const;
};

/// The stored description vector for one class or pair.
Tensor<float> encode_task(std::int64_t id, const TaskTable& table);

/// Exemplar-kind task description: the mean of the provided features.
Tensor<float> exemplar_description(const std::vector<Tensor<float>>& exemplars);

/// Seen/unseen class partition plus sample assignments; optionally a
/// base/novel partition and a two-level class hierarchy.
struct SplitSpec {
  std::vector<std::int64_t> seen, unseen;              // class ids, sorted
  std::vector<std::int64_t> train_samples, test_samples;  // sample ids
  std::vector<std::int64_t> base, novel;               // optional
  std::map<std::int64_t, std::int64_t> group_of;       // optional class -> coarse group

  void validate() const;  // seen/unseen disjoint, no duplicate ids
  bool is_seen(std::int64_t cls) const;
  bool is_unseen(std::int64_t cls) const;
};

struct SyntheticConfig {
  std::size_t n_attributes = 16;
  std::size_t n_seen = 20;
  std::size_t n_unseen = 10;
  std::size_t samples_per_class = 50;
  std::size_t feature_dim = 64;
  double noise = 0.3;
  std::uint64_t seed = 1;
  // Coarse hierarchy: classes share an attribute prefix within a group.
  std::size_t n_groups = 4;
  std::size_t prefix_len = 8;
  double train_fraction = 0.8;

  void validate() const;
};

struct SyntheticData {
  FeatureStore store;
  TaskTable tasks;
  SplitSpec split;
};

/// Linear-mixture synthetic dataset: class mean = M * attributes, samples
/// are the mean plus isotropic noise. Unseen classes are held-out attribute
/// combinations, so task-conditioned generalization is measurable.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// ---- file formats (documented in docs/formats.md) ------------------------

FeatureStore load_features(const std::string& path);
void save_features(const FeatureStore& store, const std::string& path, bool binary = true);

TaskTable load_tasks(const std::string& path, TaskKind expected);
void save_tasks(const TaskTable& table, const std::string& path);

SplitSpec load_split(const std::string& path);
void save_split(const SplitSpec& split, const std::string& path);

// ---- cross-checks ---------------------------------------------------------

/// Every split class must have a task description.
void validate_against(const TaskTable& table, const SplitSpec& split);
/// Split sample ids must exist in the store; test labels must fall in
/// seen-or-unseen.
void validate_against(const FeatureStore& store, const SplitSpec& split);

/// Optional ingest-time normalization of feature rows to unit L2 norm.
void l2_normalize_rows(Tensor<float>& m);

}  // namespace tafe

#endif  // TAFE_DATA_HPP

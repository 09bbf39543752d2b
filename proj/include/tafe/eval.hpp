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

#ifndef TAFE_EVAL_HPP
#define TAFE_EVAL_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tafe/data.hpp"
#include "tafe/model.hpp"
#include "tafe/tensor.hpp"

namespace tafe {

// ---- metric primitives ------------------------------------------------------

/// Mean over classes of within-class accuracy; classes without test samples
/// are excluded from the average.
double per_class_top1(const std::vector<std::int64_t>& predicted,
                      const std::vector<std::int64_t>& truth,
                      const std::vector<std::int64_t>& class_set);

/// 2us/(u+s), defined as 0 when u + s == 0.
double harmonic_mean(double u, double s);

struct GzslReport {
  double acc_unseen = 0.0;
  double acc_seen = 0.0;
  double harmonic = 0.0;
};

/// Joint argmax over seen-and-unseen columns, then per-class averages over
/// unseen-truth and seen-truth samples.
GzslReport gzsl_metrics(const Tensor<double>& scores, const std::vector<std::int64_t>& truth,
                        const std::vector<std::int64_t>& column_classes, const SplitSpec& split);

/// Per-row argmax mapped to class ids; ties broken by ascending class id.
std::vector<std::int64_t> argmax_labels(const Tensor<double>& scores,
                                        const std::vector<std::int64_t>& column_classes);

/// Fraction of samples whose true class ranks among the k best columns;
/// ties broken by ascending class id.
double topk_accuracy(const Tensor<double>& scores, const std::vector<std::int64_t>& truth,
                     const std::vector<std::int64_t>& column_classes, std::size_t k);

struct MapReport {
  double value = 0.0;
  std::vector<std::int64_t> skipped_pairs;  // pairs with zero positives, excluded
};

/// Retrieval mAP: for each unseen pair, rank all images by that pair's score
/// and average the precision at each positive's rank.
MapReport mean_average_precision(const Tensor<double>& scores,
                                 const std::vector<std::int64_t>& truth,
                                 const std::vector<std::int64_t>& column_classes,
                                 const std::vector<std::int64_t>& unseen_pairs);

// ---- few-shot episodes ------------------------------------------------------

struct Episode {
  std::size_t shots = 1;
  std::uint64_t trial_seed = 0;
  std::vector<std::int64_t> base_classes, novel_classes;
  // Novel class -> store row indices used as exemplars (never in the pool).
  std::map<std::int64_t, std::vector<std::size_t>> exemplar_rows;
  std::vector<std::size_t> pool_rows;

  bool operator==(const Episode&) const = default;
};

/// Deterministically draws `shots` exemplars per novel class; the remaining
/// novel samples plus base-class test samples form the evaluation pool.
Episode build_fewshot_episode(const FeatureStore& store, const SplitSpec& split,
                              std::size_t shots, std::uint64_t trial_seed);

struct FewshotTrial {
  double novel_top5 = 0.0;
  double all_top5 = 0.0;
};

struct FewshotReport {
  std::size_t shots = 1;
  std::vector<FewshotTrial> trials;
  double novel_top5_mean = 0.0;
  double all_top5_mean = 0.0;
};

/// Scores every pool sample against base-centroid and novel-exemplar task
/// descriptions; top-5 accuracy over novel-truth samples and over all samples,
/// averaged across trials. Requires an exemplar-description model
/// (task_dim == feature dim).
FewshotReport fewshot_eval(TafeNet<float>& net, const FeatureStore& store,
                           const SplitSpec& split, const std::vector<Episode>& episodes,
                           int threads = 1);

// ---- shuffled-task diagnostic -----------------------------------------------

enum class ShuffleMode { in_group, out_of_group };

/// Replaces the target class's task description, per test sample, with one
/// drawn from the same coarse group (or a different group) and reports the
/// mean top-1 accuracy for the target class across `repeats` draws.
double shuffled_task_eval(TafeNet<float>& net, const FeatureStore& store,
                          const TaskTable& tasks, const SplitSpec& split,
                          std::int64_t target_class, ShuffleMode mode, std::size_t repeats,
                          std::uint64_t seed, int threads = 1);

// ---- embedding export ---------------------------------------------------------

/// Writes one row per requested (sample, task) pair: the TAFE plus sample id,
/// task id and the binary compatibility label; plus each requested task's
/// latent embedding. Format documented in docs/formats.md.
void dump_embeddings(TafeNet<float>& net, const FeatureStore& store, const TaskTable& tasks,
                     const std::vector<std::int64_t>& sample_ids,
                     const std::vector<std::int64_t>& task_ids, const std::string& path);

struct EmbeddingDump {
  std::size_t dim = 0;
  struct TafeRow {
    std::int64_t sample_id = 0;
    std::int64_t task_id = 0;
    int label = 0;
    std::vector<float> values;
  };
  std::vector<TafeRow> tafes;
  std::map<std::int64_t, std::vector<float>> task_embeddings;
};

EmbeddingDump read_embedding_dump(const std::string& path);

// ---- protocol drivers ---------------------------------------------------------

nlohmann::ordered_json zsl_report(TafeNet<float>& net, const FeatureStore& store,
                                  const TaskTable& tasks, const SplitSpec& split,
                                  int threads = 1);
nlohmann::ordered_json gzsl_report(TafeNet<float>& net, const FeatureStore& store,
                                   const TaskTable& tasks, const SplitSpec& split,
                                   int threads = 1);
nlohmann::ordered_json composition_report(TafeNet<float>& net, const FeatureStore& store,
                                          const TaskTable& tasks, const SplitSpec& split,
                                          int threads = 1);
nlohmann::ordered_json fewshot_report(TafeNet<float>& net, const FeatureStore& store,
                                      const SplitSpec& split,
                                      const std::vector<std::size_t>& shot_settings,
                                      std::size_t trials, std::uint64_t seed, int threads = 1);
nlohmann::ordered_json shuffle_report(TafeNet<float>& net, const FeatureStore& store,
                                      const TaskTable& tasks, const SplitSpec& split,
                                      std::size_t repeats, std::uint64_t seed, int threads = 1);

/// Human-readable aligned table of a report's scalar fields.
void print_report(const nlohmann::ordered_json& report, std::ostream& os);

}  // namespace tafe

#endif  // TAFE_EVAL_HPP

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

#include "tafe/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "tafe/rng.hpp"

namespace tafe {

namespace {

constexpr const char* kEmbedHeader = "tafe-embed v1";

std::string fmt_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
  return buf;
}

std::map<std::int64_t, std::size_t> id_index(const FeatureStore& store) {
  std::map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < store.size(); ++i) index[store.sample_ids[i]] = i;
  return index;
}

/// Store row indices of the split's test samples.
std::vector<std::size_t> test_rows(const FeatureStore& store, const SplitSpec& split) {
  const auto index = id_index(store);
  std::vector<std::size_t> rows;
  for (std::int64_t id : split.test_samples) {
    const auto it = index.find(id);
    if (it == index.end())
      throw std::runtime_error("split test references unknown sample id " + std::to_string(id));
    rows.push_back(it->second);
  }
  return rows;
}

Tensor<float> gather_rows(const FeatureStore& store, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw std::invalid_argument("gather_rows: empty selection");
  Tensor<float> out({rows.size(), store.dim()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < store.dim(); ++j) out(i, j) = store.features(rows[i], j);
  return out;
}

/// Column order for ranking: score descending, class id ascending on ties.
std::vector<std::size_t> ranked_columns(const Tensor<double>& scores, std::size_t row,
                                        const std::vector<std::int64_t>& column_classes) {
  std::vector<std::size_t> order(column_classes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scores(row, a), sb = scores(row, b);
    if (sa != sb) return sa > sb;
    return column_classes[a] < column_classes[b];
  });
  return order;
}

}  // namespace

// ---- metric primitives ------------------------------------------------------

double per_class_top1(const std::vector<std::int64_t>& predicted,
                      const std::vector<std::int64_t>& truth,
                      const std::vector<std::int64_t>& class_set) {
  if (class_set.empty()) throw std::invalid_argument("per_class_top1: empty class set");
  if (predicted.size() != truth.size())
    throw std::invalid_argument("per_class_top1: " + std::to_string(predicted.size()) +
                                " predictions vs " + std::to_string(truth.size()) + " labels");
  std::set<std::int64_t> allowed(class_set.begin(), class_set.end());
  std::map<std::int64_t, std::pair<std::size_t, std::size_t>> per_class;  // correct, total
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!allowed.count(truth[i]))
      throw std::invalid_argument("per_class_top1: truth label " + std::to_string(truth[i]) +
                                  " outside the class set");
    auto& [correct, total] = per_class[truth[i]];
    ++total;
    if (predicted[i] == truth[i]) ++correct;
  }
  if (per_class.empty()) throw std::invalid_argument("per_class_top1: no samples");
  double acc = 0.0;
  for (const auto& [cls, ct] : per_class)
    acc += static_cast<double>(ct.first) / static_cast<double>(ct.second);
  return acc / static_cast<double>(per_class.size());
}

double harmonic_mean(double u, double s) {
  if (u + s == 0.0) return 0.0;
  return 2.0 * u * s / (u + s);
}

std::vector<std::int64_t> argmax_labels(const Tensor<double>& scores,
                                        const std::vector<std::int64_t>& column_classes) {
  if (scores.rank() != 2 || scores.cols() != column_classes.size())
    throw std::invalid_argument("argmax_labels: scores " + shape_str(scores.shape()) +
                                " vs " + std::to_string(column_classes.size()) + " columns");
  // Columns are visited in ascending class-id order so ties resolve to the
  // smallest class id.
  std::vector<std::size_t> order(column_classes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return column_classes[a] < column_classes[b];
  });
  std::vector<std::int64_t> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::size_t best = order[0];
    for (std::size_t j : order)
      if (scores(i, j) > scores(i, best)) best = j;
    out[i] = column_classes[best];
  }
  return out;
}

GzslReport gzsl_metrics(const Tensor<double>& scores, const std::vector<std::int64_t>& truth,
                        const std::vector<std::int64_t>& column_classes,
                        const SplitSpec& split) {
  if (scores.rank() != 2 || scores.rows() != truth.size() ||
      scores.cols() != column_classes.size())
    throw std::invalid_argument("gzsl_metrics: inconsistent scores " +
                                shape_str(scores.shape()));
  std::set<std::int64_t> columns(column_classes.begin(), column_classes.end());
  for (std::int64_t c : split.seen)
    if (!columns.count(c))
      throw std::invalid_argument("gzsl_metrics: seen class " + std::to_string(c) +
                                  " has no score column");
  for (std::int64_t c : split.unseen)
    if (!columns.count(c))
      throw std::invalid_argument("gzsl_metrics: unseen class " + std::to_string(c) +
                                  " has no score column");
  for (std::int64_t t : truth)
    if (!split.is_seen(t) && !split.is_unseen(t))
      throw std::invalid_argument("gzsl_metrics: truth label " + std::to_string(t) +
                                  " outside the split");

  const std::vector<std::int64_t> predicted = argmax_labels(scores, column_classes);
  std::vector<std::int64_t> up, ut, sp, st;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (split.is_unseen(truth[i])) {
      up.push_back(predicted[i]);
      ut.push_back(truth[i]);
    } else {
      sp.push_back(predicted[i]);
      st.push_back(truth[i]);
    }
  }
  GzslReport r;
  // A prediction may land anywhere in the joint space; per_class_top1 only
  // constrains the truth labels.
  r.acc_unseen = ut.empty() ? 0.0 : per_class_top1(up, ut, split.unseen);
  r.acc_seen = st.empty() ? 0.0 : per_class_top1(sp, st, split.seen);
  r.harmonic = harmonic_mean(r.acc_unseen, r.acc_seen);
  return r;
}

double topk_accuracy(const Tensor<double>& scores, const std::vector<std::int64_t>& truth,
                     const std::vector<std::int64_t>& column_classes, std::size_t k) {
  if (scores.rank() != 2 || scores.rows() != truth.size() ||
      scores.cols() != column_classes.size())
    throw std::invalid_argument("topk_accuracy: inconsistent scores " +
                                shape_str(scores.shape()));
  if (k < 1 || k > column_classes.size())
    throw std::invalid_argument("topk_accuracy: k = " + std::to_string(k) +
                                " out of range [1, " + std::to_string(column_classes.size()) +
                                "]");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const std::vector<std::size_t> order = ranked_columns(scores, i, column_classes);
    for (std::size_t r = 0; r < k; ++r)
      if (column_classes[order[r]] == truth[i]) {
        ++correct;
        break;
      }
  }
  return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

MapReport mean_average_precision(const Tensor<double>& scores,
                                 const std::vector<std::int64_t>& truth,
                                 const std::vector<std::int64_t>& column_classes,
                                 const std::vector<std::int64_t>& unseen_pairs) {
  if (unseen_pairs.empty())
    throw std::invalid_argument("mean_average_precision: no unseen pairs");
  if (scores.rank() != 2 || scores.rows() != truth.size() ||
      scores.cols() != column_classes.size())
    throw std::invalid_argument("mean_average_precision: inconsistent scores " +
                                shape_str(scores.shape()));
  MapReport out;
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::int64_t pair : unseen_pairs) {
    const auto cit = std::find(column_classes.begin(), column_classes.end(), pair);
    if (cit == column_classes.end())
      throw std::invalid_argument("mean_average_precision: pair " + std::to_string(pair) +
                                  " has no score column");
    const std::size_t col = static_cast<std::size_t>(cit - column_classes.begin());
    std::size_t n_pos = 0;
    for (std::int64_t t : truth)
      if (t == pair) ++n_pos;
    if (n_pos == 0) {
      out.skipped_pairs.push_back(pair);
      continue;
    }
    // Rank all evaluated images by this pair's score; ties by sample index.
    std::vector<std::size_t> order(scores.rows());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return scores(a, col) > scores(b, col);
    });
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (truth[order[r]] == pair) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    sum += ap / static_cast<double>(n_pos);
    ++counted;
  }
  if (counted == 0)
    throw std::runtime_error("mean_average_precision: every pair had zero positives");
  out.value = sum / static_cast<double>(counted);
  return out;
}

// ---- few-shot episodes ------------------------------------------------------

Episode build_fewshot_episode(const FeatureStore& store, const SplitSpec& split,
                              std::size_t shots, std::uint64_t trial_seed) {
  if (shots == 0) throw std::invalid_argument("few-shot episode: shots must be positive");
  Episode ep;
  ep.shots = shots;
  ep.trial_seed = trial_seed;
  ep.base_classes = split.base.empty() ? split.seen : split.base;
  ep.novel_classes = split.novel.empty() ? split.unseen : split.novel;
  if (ep.novel_classes.empty())
    throw std::invalid_argument("few-shot episode: no novel classes in the split");

  Rng rng(trial_seed);
  std::set<std::size_t> exemplar_set;
  for (std::int64_t cls : ep.novel_classes) {
    std::vector<std::size_t> rows = store.rows_for_class(cls);
    if (rows.size() <= shots)
      throw std::invalid_argument("few-shot episode: class " + std::to_string(cls) + " has " +
                                  std::to_string(rows.size()) + " samples, need more than " +
                                  std::to_string(shots));
    rng.shuffle(rows);
    std::vector<std::size_t> chosen(rows.begin(), rows.begin() + shots);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t r : chosen) exemplar_set.insert(r);
    ep.exemplar_rows[cls] = std::move(chosen);
  }

  // Pool: remaining novel-class samples plus base-class test samples.
  std::set<std::int64_t> novel_set(ep.novel_classes.begin(), ep.novel_classes.end());
  std::set<std::int64_t> base_set(ep.base_classes.begin(), ep.base_classes.end());
  for (std::int64_t cls : ep.novel_classes)
    for (std::size_t r : store.rows_for_class(cls))
      if (!exemplar_set.count(r)) ep.pool_rows.push_back(r);
  for (std::size_t r : test_rows(store, split)) {
    const std::int64_t cls = store.labels[r];
    if (base_set.count(cls) && !novel_set.count(cls)) ep.pool_rows.push_back(r);
  }
  std::sort(ep.pool_rows.begin(), ep.pool_rows.end());
  return ep;
}

FewshotReport fewshot_eval(TafeNet<float>& net, const FeatureStore& store,
                           const SplitSpec& split, const std::vector<Episode>& episodes,
                           int threads) {
  if (episodes.empty()) throw std::invalid_argument("fewshot_eval: no episodes");
  if (net.config().task_dim != store.dim())
    throw std::invalid_argument(
        "fewshot_eval: exemplar task descriptions need task_dim == feature dim (" +
        std::to_string(net.config().task_dim) + " vs " + std::to_string(store.dim()) + ")");
  FewshotReport report;
  report.shots = episodes[0].shots;

  // Base-class descriptions: mean of the class's training samples.
  const auto index = id_index(store);
  auto base_description = [&](std::int64_t cls) {
    std::vector<Tensor<float>> rows;
    for (std::int64_t id : split.train_samples) {
      const std::size_t r = index.at(id);
      if (store.labels[r] == cls) rows.push_back(store.row(r));
    }
    if (rows.empty())
      throw std::runtime_error("fewshot_eval: base class " + std::to_string(cls) +
                               " has no training samples for its description");
    return exemplar_description(rows);
  };

  for (const Episode& ep : episodes) {
    if (ep.shots != report.shots)
      throw std::invalid_argument("fewshot_eval: episodes mix shot counts");

    std::vector<std::int64_t> label_space = ep.base_classes;
    label_space.insert(label_space.end(), ep.novel_classes.begin(), ep.novel_classes.end());
    std::sort(label_space.begin(), label_space.end());
    std::set<std::int64_t> novel_set(ep.novel_classes.begin(), ep.novel_classes.end());

    Tensor<float> task_matrix({label_space.size(), store.dim()});
    for (std::size_t j = 0; j < label_space.size(); ++j) {
      Tensor<float> desc;
      if (novel_set.count(label_space[j])) {
        std::vector<Tensor<float>> ex;
        for (std::size_t r : ep.exemplar_rows.at(label_space[j])) ex.push_back(store.row(r));
        desc = exemplar_description(ex);
      } else {
        desc = base_description(label_space[j]);
      }
      for (std::size_t d = 0; d < store.dim(); ++d) task_matrix(j, d) = desc[d];
    }

    const Tensor<float> features = gather_rows(store, ep.pool_rows);
    const Tensor<double> scores =
        net.score_matrix(features, task_matrix, threads).cast<double>();
    std::vector<std::int64_t> truth;
    for (std::size_t r : ep.pool_rows) truth.push_back(store.labels[r]);

    const std::size_t k = std::min<std::size_t>(5, label_space.size());
    FewshotTrial trial;
    trial.all_top5 = topk_accuracy(scores, truth, label_space, k);

    std::vector<std::size_t> novel_rows;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (novel_set.count(truth[i])) novel_rows.push_back(i);
    if (novel_rows.empty())
      throw std::runtime_error("fewshot_eval: pool has no novel-class samples");
    Tensor<double> novel_scores({novel_rows.size(), label_space.size()});
    std::vector<std::int64_t> novel_truth;
    for (std::size_t i = 0; i < novel_rows.size(); ++i) {
      novel_truth.push_back(truth[novel_rows[i]]);
      for (std::size_t j = 0; j < label_space.size(); ++j)
        novel_scores(i, j) = scores(novel_rows[i], j);
    }
    trial.novel_top5 = topk_accuracy(novel_scores, novel_truth, label_space, k);
    report.trials.push_back(trial);
  }

  for (const FewshotTrial& t : report.trials) {
    report.novel_top5_mean += t.novel_top5;
    report.all_top5_mean += t.all_top5;
  }
  report.novel_top5_mean /= static_cast<double>(report.trials.size());
  report.all_top5_mean /= static_cast<double>(report.trials.size());
  return report;
}

// ---- shuffled-task diagnostic -----------------------------------------------

double shuffled_task_eval(TafeNet<float>& net, const FeatureStore& store,
                          const TaskTable& tasks, const SplitSpec& split,
                          std::int64_t target_class, ShuffleMode mode, std::size_t repeats,
                          std::uint64_t seed, int threads) {
  if (repeats == 0) throw std::invalid_argument("shuffled_task_eval: repeats must be >= 1");
  const auto git = split.group_of.find(target_class);
  if (git == split.group_of.end())
    throw std::invalid_argument("shuffled_task_eval: class " + std::to_string(target_class) +
                                " has no coarse group");
  const std::int64_t group = git->second;

  std::vector<std::int64_t> donors;
  for (const auto& [cls, gid] : split.group_of) {
    if (cls == target_class || !tasks.has(cls)) continue;
    if (mode == ShuffleMode::in_group ? gid == group : gid != group) donors.push_back(cls);
  }
  if (donors.empty()) {
    if (mode == ShuffleMode::in_group)
      throw std::invalid_argument("shuffled_task_eval: group " + std::to_string(group) +
                                  " has no class other than " + std::to_string(target_class));
    throw std::invalid_argument("shuffled_task_eval: no class outside group " +
                                std::to_string(group));
  }

  std::vector<std::size_t> rows;
  for (std::size_t r : test_rows(store, split))
    if (store.labels[r] == target_class) rows.push_back(r);
  if (rows.empty())
    throw std::invalid_argument("shuffled_task_eval: class " + std::to_string(target_class) +
                                " has no test samples");

  // Standard columns for every class are fixed; only the target class's
  // column is re-scored under donor descriptions.
  const std::vector<std::int64_t>& label_space = tasks.class_ids;
  const std::size_t target_col = tasks.index_of(target_class);
  const Tensor<float> features = gather_rows(store, rows);
  const Tensor<double> base_scores =
      net.score_matrix(features, tasks.descriptions, threads).cast<double>();

  Rng rng(seed);
  double acc_sum = 0.0;
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::int64_t donor = donors[rng.below(donors.size())];
      const float logit = net.predict_logit(store.row(rows[i]), encode_task(donor, tasks));
      std::size_t best = 0;
      double best_score = -1e300;
      for (std::size_t j = 0; j < label_space.size(); ++j) {
        const double s = j == target_col ? static_cast<double>(logit) : base_scores(i, j);
        if (s > best_score) {
          best_score = s;
          best = j;
        }
      }
      if (label_space[best] == target_class) ++correct;
    }
    acc_sum += static_cast<double>(correct) / static_cast<double>(rows.size());
  }
  return acc_sum / static_cast<double>(repeats);
}

// ---- embedding export ---------------------------------------------------------

void dump_embeddings(TafeNet<float>& net, const FeatureStore& store, const TaskTable& tasks,
                     const std::vector<std::int64_t>& sample_ids,
                     const std::vector<std::int64_t>& task_ids, const std::string& path) {
  if (sample_ids.empty() || task_ids.empty())
    throw std::invalid_argument("dump_embeddings: need at least one sample and one task");
  const auto index = id_index(store);
  for (std::int64_t id : sample_ids)
    if (!index.count(id))
      throw std::invalid_argument("dump_embeddings: unknown sample id " + std::to_string(id));
  for (std::int64_t id : task_ids) tasks.index_of(id);  // throws naming the class

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("embedding dump '" + path + "': cannot write");
  out << kEmbedHeader << '\n';
  out << "dim " << net.config().embed_dim << '\n';
  for (std::int64_t task : task_ids) {
    const Tensor<float> e = net.embed_task(encode_task(task, tasks));
    out << "task " << task;
    for (std::size_t d = 0; d < e.size(); ++d) out << ' ' << fmt_float(e[d]);
    out << '\n';
  }
  for (std::int64_t sample : sample_ids) {
    const std::size_t r = index.at(sample);
    for (std::int64_t task : task_ids) {
      const Tensor<float> tafe = net.compute_tafe(store.row(r), encode_task(task, tasks));
      const int label = store.labels[r] == task ? 1 : 0;
      out << "tafe " << sample << ' ' << task << ' ' << label;
      for (std::size_t d = 0; d < tafe.size(); ++d) out << ' ' << fmt_float(tafe[d]);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("embedding dump '" + path + "': write failed");
}

EmbeddingDump read_embedding_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("embedding dump '" + path + "': cannot open");
  std::string line;
  if (!std::getline(in, line) || line != kEmbedHeader)
    throw std::runtime_error("embedding dump '" + path + "': missing header");
  EmbeddingDump dump;
  std::size_t ln = 1;
  while (std::getline(in, line)) {
    ++ln;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    const std::string ctx = "embedding dump '" + path + "' line " + std::to_string(ln);
    if (kind == "dim") {
      is >> dump.dim;
    } else if (kind == "task") {
      std::int64_t id;
      is >> id;
      std::vector<float> v;
      float x;
      while (is >> x) v.push_back(x);
      if (v.size() != dump.dim) throw std::runtime_error(ctx + ": wrong vector length");
      dump.task_embeddings[id] = std::move(v);
    } else if (kind == "tafe") {
      EmbeddingDump::TafeRow row;
      is >> row.sample_id >> row.task_id >> row.label;
      float x;
      while (is >> x) row.values.push_back(x);
      if (row.values.size() != dump.dim) throw std::runtime_error(ctx + ": wrong vector length");
      dump.tafes.push_back(std::move(row));
    } else {
      throw std::runtime_error(ctx + ": unrecognized record '" + kind + "'");
    }
  }
  return dump;
}

// ---- protocol drivers ---------------------------------------------------------

namespace {

/// Scores the given test rows against a class list's descriptions.
struct ScoredSet {
  Tensor<double> scores;
  std::vector<std::int64_t> truth;
  std::vector<std::int64_t> columns;
};

ScoredSet score_rows(TafeNet<float>& net, const FeatureStore& store, const TaskTable& tasks,
                     const std::vector<std::size_t>& rows,
                     const std::vector<std::int64_t>& columns, int threads) {
  ScoredSet s;
  s.columns = columns;
  const Tensor<float> features = gather_rows(store, rows);
  s.scores = net.score_matrix(features, tasks.rows_for(columns), threads).cast<double>();
  for (std::size_t r : rows) s.truth.push_back(store.labels[r]);
  return s;
}

}  // namespace

nlohmann::ordered_json zsl_report(TafeNet<float>& net, const FeatureStore& store,
                                  const TaskTable& tasks, const SplitSpec& split, int threads) {
  nlohmann::ordered_json j;
  j["protocol"] = "zsl";
  if (split.unseen.empty()) {
    j["enabled"] = false;
    j["note"] = "no unseen classes; zero-shot evaluation disabled";
    return j;
  }
  std::vector<std::size_t> rows;
  for (std::size_t r : test_rows(store, split))
    if (split.is_unseen(store.labels[r])) rows.push_back(r);
  if (rows.empty()) throw std::runtime_error("zsl: no test samples with unseen classes");
  const ScoredSet s = score_rows(net, store, tasks, rows, split.unseen, threads);
  j["enabled"] = true;
  j["per_class_top1"] = per_class_top1(argmax_labels(s.scores, s.columns), s.truth, s.columns);
  j["n_test"] = rows.size();
  j["n_classes"] = split.unseen.size();
  return j;
}

nlohmann::ordered_json gzsl_report(TafeNet<float>& net, const FeatureStore& store,
                                   const TaskTable& tasks, const SplitSpec& split, int threads) {
  std::vector<std::int64_t> columns = split.seen;
  columns.insert(columns.end(), split.unseen.begin(), split.unseen.end());
  std::sort(columns.begin(), columns.end());
  const std::vector<std::size_t> rows = test_rows(store, split);
  const ScoredSet s = score_rows(net, store, tasks, rows, columns, threads);
  const GzslReport r = gzsl_metrics(s.scores, s.truth, s.columns, split);
  nlohmann::ordered_json j;
  j["protocol"] = "gzsl";
  j["acc_unseen"] = r.acc_unseen;
  j["acc_seen"] = r.acc_seen;
  j["harmonic_mean"] = r.harmonic;
  j["n_test"] = rows.size();
  return j;
}

nlohmann::ordered_json composition_report(TafeNet<float>& net, const FeatureStore& store,
                                          const TaskTable& tasks, const SplitSpec& split,
                                          int threads) {
  if (split.unseen.empty())
    throw std::runtime_error("composition: no unseen pairs in the split");
  std::vector<std::size_t> rows;
  for (std::size_t r : test_rows(store, split))
    if (split.is_unseen(store.labels[r])) rows.push_back(r);
  if (rows.empty()) throw std::runtime_error("composition: no test samples with unseen pairs");
  // Per the benchmark protocol, evaluation ranks the unseen pairs only.
  const ScoredSet s = score_rows(net, store, tasks, rows, split.unseen, threads);
  const MapReport m = mean_average_precision(s.scores, s.truth, s.columns, split.unseen);
  nlohmann::ordered_json j;
  j["protocol"] = "composition";
  j["map"] = m.value;
  j["skipped_pairs"] = m.skipped_pairs;
  for (std::size_t k = 1; k <= 3 && k <= s.columns.size(); ++k)
    j["top" + std::to_string(k)] = topk_accuracy(s.scores, s.truth, s.columns, k);
  j["n_test"] = rows.size();
  j["n_pairs"] = split.unseen.size();
  return j;
}

nlohmann::ordered_json fewshot_report(TafeNet<float>& net, const FeatureStore& store,
                                      const SplitSpec& split,
                                      const std::vector<std::size_t>& shot_settings,
                                      std::size_t trials, std::uint64_t seed, int threads) {
  if (shot_settings.empty() || trials == 0)
    throw std::invalid_argument("fewshot: need at least one shot setting and one trial");
  nlohmann::ordered_json j;
  j["protocol"] = "fewshot";
  j["trials"] = trials;
  nlohmann::ordered_json settings = nlohmann::ordered_json::array();
  for (std::size_t shots : shot_settings) {
    std::vector<Episode> episodes;
    for (std::size_t t = 0; t < trials; ++t)
      episodes.push_back(build_fewshot_episode(store, split, shots, seed + t));
    const FewshotReport r = fewshot_eval(net, store, split, episodes, threads);
    nlohmann::ordered_json s;
    s["shots"] = shots;
    s["novel_top5_mean"] = r.novel_top5_mean;
    s["all_top5_mean"] = r.all_top5_mean;
    nlohmann::ordered_json per_trial = nlohmann::ordered_json::array();
    for (const FewshotTrial& t : r.trials) {
      nlohmann::ordered_json row;
      row["novel_top5"] = t.novel_top5;
      row["all_top5"] = t.all_top5;
      per_trial.push_back(row);
    }
    s["per_trial"] = per_trial;
    settings.push_back(s);
  }
  j["settings"] = settings;
  return j;
}

nlohmann::ordered_json shuffle_report(TafeNet<float>& net, const FeatureStore& store,
                                      const TaskTable& tasks, const SplitSpec& split,
                                      std::size_t repeats, std::uint64_t seed, int threads) {
  if (split.group_of.empty())
    throw std::runtime_error("shuffle: the split carries no class hierarchy");
  // Count members per group to know which classes support in-group draws.
  std::map<std::int64_t, std::size_t> group_size;
  for (const auto& [cls, gid] : split.group_of) ++group_size[gid];

  std::set<std::int64_t> classes_with_tests;
  for (std::size_t r : test_rows(store, split)) classes_with_tests.insert(store.labels[r]);

  nlohmann::ordered_json per_class = nlohmann::ordered_json::array();
  double in_sum = 0.0, out_sum = 0.0;
  std::size_t counted = 0;
  for (std::int64_t cls : split.seen) {
    const auto git = split.group_of.find(cls);
    if (git == split.group_of.end()) continue;
    if (group_size[git->second] < 2) continue;
    if (group_size.size() < 2) continue;
    if (!classes_with_tests.count(cls)) continue;
    const double in_acc = shuffled_task_eval(net, store, tasks, split, cls,
                                             ShuffleMode::in_group, repeats, seed, threads);
    const double out_acc = shuffled_task_eval(net, store, tasks, split, cls,
                                              ShuffleMode::out_of_group, repeats, seed, threads);
    nlohmann::ordered_json row;
    row["class"] = cls;
    row["group"] = git->second;
    row["in_group"] = in_acc;
    row["out_of_group"] = out_acc;
    per_class.push_back(row);
    in_sum += in_acc;
    out_sum += out_acc;
    ++counted;
  }
  if (counted == 0) throw std::runtime_error("shuffle: no eligible classes");
  nlohmann::ordered_json j;
  j["protocol"] = "shuffle";
  j["repeats"] = repeats;
  j["in_group_mean"] = in_sum / static_cast<double>(counted);
  j["out_of_group_mean"] = out_sum / static_cast<double>(counted);
  j["per_class"] = per_class;
  return j;
}

void print_report(const nlohmann::ordered_json& report, std::ostream& os) {
  std::size_t width = 0;
  for (const auto& [key, value] : report.items())
    if (value.is_primitive()) width = std::max(width, key.size());
  for (const auto& [key, value] : report.items()) {
    if (!value.is_primitive()) continue;
    os << "  " << key << std::string(width - key.size() + 2, ' ') << value.dump() << '\n';
  }
}

}  // namespace tafe
